#include "tmseeg/signal.hpp"

#include "tmseeg/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>

namespace tmseeg {

namespace {

constexpr std::uint64_t kTagOscillator = 1;
constexpr std::uint64_t kTagGroupDriver = 2;
constexpr std::uint64_t kTagSensorNoise = 3;
constexpr std::uint64_t kTagArtifactNoise = 4;

bool in_window(double t, const std::optional<double>& onset, const std::optional<double>& offset) {
  if (onset && t < *onset) return false;
  if (offset && t >= *offset) return false;
  return true;
}

// Unit-variance AR(2) resonator at `freq` Hz with -3 dB width `bw` Hz.
VectorXd resonator(double freq, double bw, double fs, Index n, std::mt19937_64& rng) {
  const double r = std::exp(-std::numbers::pi * bw / fs);
  const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / fs);
  const double a2 = -r * r;
  const double var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) * (1.0 - a2) - a1 * a1));
  const double scale = 1.0 / std::sqrt(var);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index burn = static_cast<Index>(std::ceil(10.0 * fs / std::max(bw, 0.1)));
  double x1 = 0.0, x2 = 0.0;
  VectorXd out(n);
  for (Index i = -burn; i < n; ++i) {
    const double x = a1 * x1 + a2 * x2 + normal(rng);
    x2 = x1;
    x1 = x;
    if (i >= 0) out(i) = x * scale;
  }
  return out;
}

void check_channels_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw DomainError(std::string(what) + " contains non-finite values");
}

}  // namespace

// ---------------------------------------------------------------------------

Index Recording::index_of(double t_s) const {
  return t0_index + static_cast<Index>(std::llround(t_s * sample_rate));
}

void Recording::validate() const {
  if (data.cols() < 2) throw DomainError("recording needs at least 2 samples");
  if (!(sample_rate > 0)) throw DomainError("sample rate must be positive");
  if (t0_index < 0 || t0_index >= data.cols()) throw DomainError("t0_index out of range");
  check_channels_finite(data, "recording");
}

void NoiseCovariance::validate() const {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
    throw CovarianceError("noise covariance must be square and nonempty");
  if (!matrix.allFinite()) throw CovarianceError("noise covariance has non-finite entries");
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw CovarianceError("noise covariance is not symmetric");
  const double trace = matrix.trace();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(matrix, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * std::max(trace, 0.0) - 1e-300)
    throw CovarianceError("noise covariance is indefinite");
  if (regularization_floor < 0) throw CovarianceError("regularization floor must be nonnegative");
}

NoiseCovariance NoiseCovariance::identity(Index n, double variance) {
  return {variance * MatrixXd::Identity(n, n), 0, 0.0};
}

Index Epoch::t0_index() const { return static_cast<Index>(std::llround(pre_s * sample_rate)); }

void Epoch::validate() const {
  if (!(pre_s > 0) || !(post_s > 0)) throw DomainError("epoch window must be positive on both sides");
  if (data.cols() != static_cast<Index>(std::llround((pre_s + post_s) * sample_rate)))
    throw DomainError("epoch sample count does not match its window");
  check_channels_finite(data, "epoch");
}

std::string to_string(Waveform w) {
  switch (w) {
    case Waveform::sine_burst: return "sine_burst";
    case Waveform::step: return "step";
    case Waveform::oscillator: return "oscillator";
  }
  return "?";
}

Waveform waveform_from_string(const std::string& s) {
  if (s == "sine_burst") return Waveform::sine_burst;
  if (s == "step") return Waveform::step;
  if (s == "oscillator") return Waveform::oscillator;
  throw ScenarioError("unknown waveform '" + s + "' (expected sine_burst|step|oscillator)");
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------

MatrixXd source_waveforms(const GainMatrix& gain, const Scenario& scenario, double sample_rate,
                          Index n_samples, std::uint64_t seed) {
  const Index per = gain.columns_per_source();
  MatrixXd s = MatrixXd::Zero(gain.matrix.cols(), n_samples);
  const Index t0 = static_cast<Index>(std::llround(scenario.pulse_time_s * sample_rate));

  std::map<int, VectorXd> drivers;
  for (const auto& act : scenario.activities) {
    if (act.waveform == Waveform::oscillator && act.group >= 0 && !drivers.count(act.group)) {
      auto rng = make_stream(seed, static_cast<std::uint64_t>(act.group), kTagGroupDriver);
      drivers[act.group] = resonator(act.frequency, act.bandwidth, sample_rate, n_samples, rng);
    }
  }

  for (std::size_t a = 0; a < scenario.activities.size(); ++a) {
    const auto& act = scenario.activities[a];
    if (act.source < 0 || act.source >= gain.n_sources())
      throw ScenarioError("activity " + std::to_string(a) + " references source " +
                          std::to_string(act.source) + " outside [0, " +
                          std::to_string(gain.n_sources()) + ")");
    if (act.waveform != Waveform::step && !(act.frequency > 0))
      throw ScenarioError("activity " + std::to_string(a) + " needs a positive frequency");
    if (act.waveform == Waveform::oscillator &&
        (std::abs(act.coupling_before) > 1 || std::abs(act.coupling_after) > 1))
      throw ScenarioError("activity " + std::to_string(a) + " coupling must lie in [-1, 1]");

    VectorXd w = VectorXd::Zero(n_samples);
    if (act.waveform == Waveform::oscillator) {
      auto rng = make_stream(seed, a, kTagOscillator);
      const VectorXd own = resonator(act.frequency, act.bandwidth, sample_rate, n_samples, rng);
      const VectorXd* shared = act.group >= 0 ? &drivers.at(act.group) : nullptr;
      for (Index i = 0; i < n_samples; ++i) {
        const double c = shared ? (i < t0 ? act.coupling_before : act.coupling_after) : 0.0;
        w(i) = std::sqrt(1.0 - c * c) * own(i) + (shared ? c * (*shared)(i) : 0.0);
      }
    }
    for (Index i = 0; i < n_samples; ++i) {
      const double t = static_cast<double>(i - t0) / sample_rate;
      if (!in_window(t, act.onset_s, act.offset_s)) {
        w(i) = 0.0;
        continue;
      }
      switch (act.waveform) {
        case Waveform::sine_burst: {
          const double start = act.onset_s.value_or(-scenario.pulse_time_s);
          w(i) = std::sin(2.0 * std::numbers::pi * act.frequency * (t - start) + act.phase);
          break;
        }
        case Waveform::step: w(i) = 1.0; break;
        case Waveform::oscillator: break;
      }
    }
    w *= act.amplitude;

    if (per == 1) {
      s.row(act.source) += w.transpose();
    } else {
      Vector3d dir = act.orientation.value_or(
          gain.sources.positions[static_cast<std::size_t>(act.source)].normalized());
      if (!(dir.norm() > 0)) throw ScenarioError("activity orientation must be nonzero");
      dir.normalize();
      for (Index c = 0; c < 3; ++c) s.row(act.source * 3 + c) += dir(c) * w.transpose();
    }
  }
  return s;
}

MatrixXd sample_gaussian_noise(const MatrixXd& cov, Index n_samples, std::uint64_t seed,
                               std::uint64_t tag) {
  const Index n = cov.rows();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const MatrixXd factor = es.eigenvectors() * root.asDiagonal();
  MatrixXd z(n, n_samples);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index c = 0; c < n; ++c) {
    auto rng = make_stream(seed, static_cast<std::uint64_t>(c), tag);
    for (Index i = 0; i < n_samples; ++i) z(c, i) = normal(rng);
  }
  return factor * z;
}

Recording simulate_recording(const GainMatrix& gain, const Scenario& scenario,
                             const NoiseCovariance& noise, double sample_rate, double duration_s,
                             std::uint64_t seed) {
  if (!(sample_rate > 0)) throw ConfigError("sample rate must be positive");
  const auto n_samples = static_cast<Index>(std::llround(duration_s * sample_rate));
  if (n_samples < 16) throw ConfigError("duration * sample_rate must give at least 16 samples");
  const auto t0 = static_cast<Index>(std::llround(scenario.pulse_time_s * sample_rate));
  if (t0 < 0 || t0 >= n_samples) throw ScenarioError("pulse time lies outside the recording");
  if (noise.matrix.rows() != gain.n_sensors())
    throw DimensionError("noise covariance size differs from sensor count");
  noise.validate();

  Recording rec;
  rec.sample_rate = sample_rate;
  rec.t0_index = t0;
  rec.data = gain.matrix * source_waveforms(gain, scenario, sample_rate, n_samples, seed);
  if (noise.matrix.cwiseAbs().maxCoeff() > 0)
    rec.data += sample_gaussian_noise(noise.matrix, n_samples, seed, kTagSensorNoise);
  rec.annotations.push_back({"TMS", t0, t0 + 1});

  if (scenario.tms_artifact) {
    const double fs = sample_rate;
    const Index i0 = t0 + static_cast<Index>(std::llround(scenario.artifact_start_ms * fs / 1000.0));
    const Index i1 = t0 + static_cast<Index>(std::llround(scenario.artifact_end_ms * fs / 1000.0));
    if (i0 < 0 || i1 >= n_samples || i1 <= i0)
      throw ScenarioError("artifact window lies outside the recording");
    const double span = static_cast<double>(i1 - i0);
    for (Index c = 0; c < gain.n_sensors(); ++c) {
      const double weight = 0.5 + 0.5 * gain.sensors.positions[static_cast<std::size_t>(c)].z();
      for (Index i = i0; i <= i1; ++i) {
        const double phase = static_cast<double>(i - i0) / span;
        rec.data(c, i) += scenario.artifact_amplitude * weight * std::sin(2.0 * std::numbers::pi * phase);
      }
    }
    rec.annotations.push_back({"artifact", i0, i1 + 1});
  }
  return rec;
}

// ---------------------------------------------------------------------------

Recording interpolate_artifact(const Recording& rec, double cut_start_ms, double cut_end_ms,
                               double noise_scale, std::uint64_t seed) {
  rec.validate();
  if (!(cut_start_ms < cut_end_ms)) throw RangeError("cut_start_ms must precede cut_end_ms");
  if (noise_scale < 0) throw ConfigError("noise_scale must be nonnegative");
  const Index i0 = rec.index_of(cut_start_ms / 1000.0);
  const Index i1 = rec.index_of(cut_end_ms / 1000.0);
  if (i0 < 1 || i1 > rec.n_samples() - 2)
    throw RangeError("artifact cut window does not fit inside the recording");

  Recording out = rec;
  const Index left = i0 - 1, right = i1 + 1;
  const double span = static_cast<double>(right - left);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index c = 0; c < rec.n_channels(); ++c) {
    // Baseline: everything before the cut, or outside it when that is too short.
    double sigma = 0.0;
    if (noise_scale > 0) {
      std::vector<double> base;
      for (Index i = 0; i < i0; ++i) base.push_back(rec.data(c, i));
      if (base.size() < 2) {
        for (Index i = i1 + 1; i < rec.n_samples(); ++i) base.push_back(rec.data(c, i));
      }
      const Eigen::Map<const VectorXd> b(base.data(), static_cast<Index>(base.size()));
      const double mean = b.mean();
      sigma = std::sqrt((b.array() - mean).square().sum() / std::max<double>(1.0, b.size() - 1.0));
    }
    auto rng = make_stream(seed, static_cast<std::uint64_t>(c), kTagArtifactNoise);
    const double a = rec.data(c, left), bv = rec.data(c, right);
    for (Index i = i0; i <= i1; ++i) {
      const double frac = static_cast<double>(i - left) / span;
      double v = a + (bv - a) * frac;
      if (noise_scale > 0) v += noise_scale * sigma * normal(rng);
      out.data(c, i) = v;
    }
  }
  out.annotations.push_back({"interpolated", i0, i1 + 1});
  return out;
}

SosFilter butterworth_highpass_design(double cutoff_hz, int order, double sample_rate) {
  if (order < 1) throw ConfigError("filter order must be at least 1");
  if (!(cutoff_hz > 0) || !(cutoff_hz < sample_rate / 2))
    throw ConfigError("high-pass cutoff must lie in (0, Nyquist)");
  const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate);
  SosFilter sos;
  for (int i = 0; i < order / 2; ++i) {
    const double theta = std::numbers::pi * (2.0 * i + 1.0) / (2.0 * order);
    const double damping = 2.0 * std::sin(theta);
    const double a0 = 1.0 + damping * k + k * k;
    Biquad q;
    q.b = {1.0 / a0, -2.0 / a0, 1.0 / a0};
    q.a = {1.0, (2.0 * k * k - 2.0) / a0, (1.0 - damping * k + k * k) / a0};
    sos.push_back(q);
  }
  if (order % 2 == 1) {
    const double a0 = 1.0 + k;
    Biquad q;
    q.b = {1.0 / a0, -1.0 / a0, 0.0};
    q.a = {1.0, (k - 1.0) / a0, 0.0};
    sos.push_back(q);
  }
  return sos;
}

SosFilter notch_design(double line_hz, double bandwidth_hz, double sample_rate) {
  if (!(line_hz > 0) || !(line_hz < sample_rate / 2))
    throw ConfigError("notch frequency must lie in (0, Nyquist)");
  if (!(bandwidth_hz > 0)) throw ConfigError("notch bandwidth must be positive");
  const double w0 = 2.0 * std::numbers::pi * line_hz / sample_rate;
  const double alpha = std::sin(w0) * bandwidth_hz / (2.0 * line_hz);  // sin(w0) / (2Q)
  const double a0 = 1.0 + alpha;
  Biquad q;
  q.b = {1.0 / a0, -2.0 * std::cos(w0) / a0, 1.0 / a0};
  q.a = {1.0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};
  return {q};
}

double sos_gain(const SosFilter& sos, double freq_hz, double sample_rate) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sample_rate);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& q : sos) h *= (q.b[0] + q.b[1] * z1 + q.b[2] * z2) / (q.a[0] + q.a[1] * z1 + q.a[2] * z2);
  return std::abs(h);
}

namespace {

// Steady-state section states for a unit step, and the section's DC gain.
std::pair<std::array<double, 2>, double> step_state(const Biquad& q) {
  const double den = q.a[0] + q.a[1] + q.a[2];
  const double gain = den != 0 ? (q.b[0] + q.b[1] + q.b[2]) / den : 0.0;
  const double z2 = q.b[2] - q.a[2] * gain;
  const double z1 = q.b[1] - q.a[1] * gain + z2;
  return {{z1, z2}, gain};
}

void run_sos(const SosFilter& sos, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x.front();
  for (const auto& q : sos) {
    auto [state, gain] = step_state(q);
    double z1 = state[0] * level, z2 = state[1] * level;
    for (double& v : x) {
      const double in = v;
      const double y = q.b[0] * in + z1;
      z1 = q.b[1] * in - q.a[1] * y + z2;
      z2 = q.b[2] * in - q.a[2] * y;
      v = y;
    }
    level *= gain;
  }
}

}  // namespace

VectorXd sosfilt(const SosFilter& sos, ConstRefVec x) {
  std::vector<double> buf(x.data(), x.data() + x.size());
  run_sos(sos, buf);
  return Eigen::Map<VectorXd>(buf.data(), x.size());
}

VectorXd sosfiltfilt(const SosFilter& sos, ConstRefVec x) {
  const Index n = x.size();
  const Index pad = std::min<Index>(n - 1, 3 * (2 * static_cast<Index>(sos.size()) + 1));
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(n + 2 * pad));
  for (Index i = pad; i >= 1; --i) buf.push_back(2.0 * x(0) - x(i));
  for (Index i = 0; i < n; ++i) buf.push_back(x(i));
  for (Index i = 1; i <= pad; ++i) buf.push_back(2.0 * x(n - 1) - x(n - 1 - i));
  run_sos(sos, buf);
  std::reverse(buf.begin(), buf.end());
  run_sos(sos, buf);
  std::reverse(buf.begin(), buf.end());
  return Eigen::Map<VectorXd>(buf.data() + pad, n);
}

namespace {

Recording filter_channels(const Recording& rec, const SosFilter& sos, bool zero_phase) {
  rec.validate();
  Recording out = rec;
  for (Index c = 0; c < rec.n_channels(); ++c) {
    const VectorXd row = rec.data.row(c).transpose();
    out.data.row(c) = (zero_phase ? sosfiltfilt(sos, row) : sosfilt(sos, row)).transpose();
  }
  return out;
}

}  // namespace

Recording butterworth_highpass(const Recording& rec, double cutoff_hz, int order, bool zero_phase) {
  return filter_channels(rec, butterworth_highpass_design(cutoff_hz, order, rec.sample_rate),
                         zero_phase);
}

Recording notch_filter(const Recording& rec, double line_hz, double bandwidth_hz, bool zero_phase) {
  return filter_channels(rec, notch_design(line_hz, bandwidth_hz, rec.sample_rate), zero_phase);
}

Epoch epoch(const Recording& rec, double pre_s, double post_s) {
  rec.validate();
  if (!(pre_s > 0) || !(post_s > 0)) throw RangeError("epoch window must be positive on both sides");
  const auto n = static_cast<Index>(std::llround((pre_s + post_s) * rec.sample_rate));
  const Index start = rec.t0_index - static_cast<Index>(std::llround(pre_s * rec.sample_rate));
  if (start < 0 || start + n > rec.n_samples())
    throw RangeError("epoch window exceeds the recording");
  Epoch ep;
  ep.data = rec.data.middleCols(start, n);
  ep.sample_rate = rec.sample_rate;
  ep.pre_s = pre_s;
  ep.post_s = post_s;
  return ep;
}

NoiseCovariance covariance_from_samples(const MatrixXd& samples,
                                        std::optional<double> regularization_floor) {
  if (samples.cols() < std::max<Index>(2, samples.rows()))
    throw InsufficientDataError("baseline has " + std::to_string(samples.cols()) +
                                " samples; at least " + std::to_string(std::max<Index>(2, samples.rows())) +
                                " required");
  const MatrixXd centered = samples.colwise() - samples.rowwise().mean();
  NoiseCovariance cov;
  cov.matrix = centered * centered.transpose() / static_cast<double>(samples.cols() - 1);
  cov.matrix = 0.5 * (cov.matrix + cov.matrix.transpose());
  cov.n_samples_used = samples.cols();
  cov.regularization_floor =
      regularization_floor.value_or(1e-10 * cov.matrix.trace() / static_cast<double>(samples.rows()));
  if (cov.regularization_floor < 0) throw ConfigError("regularization floor must be nonnegative");
  cov.matrix.diagonal().array() += cov.regularization_floor;
  return cov;
}

NoiseCovariance estimate_noise_covariance(const Recording& rec, double start_s, double end_s,
                                          std::optional<double> regularization_floor) {
  rec.validate();
  if (!(start_s < end_s) || end_s > 0) throw RangeError("baseline must be a window before the pulse");
  const Index i0 = rec.index_of(start_s), i1 = rec.index_of(end_s);
  if (i0 < 0) throw RangeError("baseline starts before the recording");
  return covariance_from_samples(rec.data.middleCols(i0, i1 - i0), regularization_floor);
}

NoiseCovariance estimate_noise_covariance(const Epoch& ep, double start_s, double end_s,
                                          std::optional<double> regularization_floor) {
  Recording rec{ep.data, ep.sample_rate, ep.t0_index(), {}};
  return estimate_noise_covariance(rec, start_s, end_s, regularization_floor);
}

}  // namespace tmseeg

#include "tmseeg/error.hpp"
#include "tmseeg/signal.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

using namespace tmseeg;

namespace {

GainMatrix small_gain() {
  return build_spherical_leadfield(make_cap_sensors(8), make_spherical_source_space(20));
}

Recording constant_recording(Index channels, Index samples, double value, double fs = 1000.0) {
  Recording r;
  r.data = MatrixXd::Constant(channels, samples, value);
  r.sample_rate = fs;
  r.t0_index = samples / 2;
  return r;
}

Recording sine_recording(std::initializer_list<std::pair<double, double>> parts, double fs, double seconds) {
  Recording r;
  const auto n = static_cast<Index>(seconds * fs);
  r.data = MatrixXd::Zero(1, n);
  for (Index i = 0; i < n; ++i)
    for (const auto& [f, a] : parts) r.data(0, i) += a * std::sin(2 * M_PI * f * static_cast<double>(i) / fs);
  r.sample_rate = fs;
  r.t0_index = n / 2;
  return r;
}

// Amplitude of the f-Hz component by direct DFT projection (oracle).
double amplitude_at(ConstRefVec x, double f, double fs) {
  std::complex<double> acc = 0;
  for (Index i = 0; i < x.size(); ++i) acc += x(i) * std::exp(std::complex<double>(0, -2 * M_PI * f * static_cast<double>(i) / fs));
  return 2.0 * std::abs(acc) / static_cast<double>(x.size());
}

Scenario quiet() {
  Scenario sc;
  sc.pulse_time_s = 0.2;
  return sc;
}

double rms(ConstRefVec x) { return std::sqrt(x.squaredNorm() / static_cast<double>(x.size())); }

}  // namespace

TEST_CASE("zero scenario with zero noise gives a zero recording") {
  const GainMatrix g = small_gain();
  NoiseCovariance noise;
  noise.matrix = MatrixXd::Zero(8, 8);
  const Recording r = simulate_recording(g, quiet(), noise, 1000, 1.0, 5);
  CHECK(r.data.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.n_samples() == 1000);
}

TEST_CASE("unit step source reproduces its gain column") {
  const GainMatrix g = small_gain();
  NoiseCovariance noise;
  noise.matrix = MatrixXd::Zero(8, 8);
  Scenario sc = quiet();
  SourceActivity a;
  a.source = 4;
  a.waveform = Waveform::step;
  a.amplitude = 1.0;
  sc.activities = {a};
  const Recording r = simulate_recording(g, sc, noise, 1000, 0.5, 1);
  for (Index t = 0; t < r.n_samples(); t += 37)
    CHECK((r.data.col(t) - g.matrix.col(4)).cwiseAbs().maxCoeff() <= 1e-15 * g.matrix.col(4).norm() + 0.0);
}

TEST_CASE("10 Hz burst peaks at 10 Hz in the sensor spectrum") {
  const GainMatrix g = small_gain();
  Scenario sc = quiet();
  SourceActivity a;
  a.source = 3;
  a.frequency = 10.0;
  a.amplitude = 1e-8;
  sc.activities = {a};
  const Recording r = simulate_recording(g, sc, NoiseCovariance::identity(8, 1e-16), 1000, 2.0, 2);
  const VectorXd x = r.data.row(0).transpose();
  double best = 0, best_f = 0;
  for (double f = 1; f <= 100; f += 0.5) {
    const double amp = amplitude_at(x, f, 1000);
    if (amp > best) best = amp, best_f = f;
  }
  CHECK(std::abs(best_f - 10.0) <= 0.5);  // one bin at 2 s
}

TEST_CASE("scenario and noise errors") {
  const GainMatrix g = small_gain();
  Scenario sc = quiet();
  SourceActivity a;
  a.source = 99;
  sc.activities = {a};
  CHECK_THROWS_AS(simulate_recording(g, sc, NoiseCovariance::identity(8), 1000, 1.0, 1), ScenarioError);
  NoiseCovariance bad;
  bad.matrix = -MatrixXd::Identity(8, 8);
  CHECK_THROWS_AS(simulate_recording(g, quiet(), bad, 1000, 1.0, 1), CovarianceError);
}

TEST_CASE("simulation is deterministic under a seed") {
  const GainMatrix g = small_gain();
  Scenario sc = quiet();
  SourceActivity a;
  a.source = 1;
  a.waveform = Waveform::oscillator;
  sc.activities = {a};
  sc.tms_artifact = true;
  const auto r1 = simulate_recording(g, sc, NoiseCovariance::identity(8, 1e-14), 1000, 3.0, 9);
  const auto r2 = simulate_recording(g, sc, NoiseCovariance::identity(8, 1e-14), 1000, 3.0, 9);
  const auto r3 = simulate_recording(g, sc, NoiseCovariance::identity(8, 1e-14), 1000, 3.0, 10);
  CHECK(r1.data == r2.data);
  CHECK(r1.data != r3.data);
}

TEST_CASE("artifact interpolation") {
  SUBCASE("equal boundaries give a constant") {
    const Recording r = constant_recording(2, 200, 3.5);
    const Recording out = interpolate_artifact(r, -5, 10, 0.0, 1);
    CHECK(out.data == r.data);
  }
  SUBCASE("exact ramp without noise, untouched elsewhere") {
    Recording r = constant_recording(1, 200, 0.0);
    for (Index i = 0; i < 200; ++i) r.data(0, i) = std::sin(0.1 * static_cast<double>(i));
    // The cut [i0, i1] is replaced; the line joins the samples just outside it.
    const Index a = r.index_of(-0.005) - 1, b = r.index_of(0.010) + 1;
    const Recording out = interpolate_artifact(r, -5, 10, 0.0, 1);
    for (Index i = 0; i < 200; ++i) {
      if (i > a && i < b) {
        const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
        CHECK(out.data(0, i) == doctest::Approx((1 - w) * r.data(0, a) + w * r.data(0, b)).epsilon(1e-12));
      } else {
        CHECK(out.data(0, i) == r.data(0, i));
      }
    }
  }
  SUBCASE("spike suppressed to baseline scale") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 1);
    Recording r = constant_recording(4, 2000, 0.0);
    for (Index c = 0; c < 4; ++c)
      for (Index i = 0; i < 2000; ++i) r.data(c, i) = n(rng);
    for (Index i = r.index_of(-0.002); i < r.index_of(0.006); ++i) r.data.col(i).array() += 500.0;
    const Index a = r.index_of(-0.005), b = r.index_of(0.010);
    CHECK(r.data.middleCols(a, b - a + 1).cwiseAbs().maxCoeff() >= 100.0);
    const Recording out = interpolate_artifact(r, -5, 10, 1.0, 3);
    CHECK(out.data.middleCols(a, b - a + 1).cwiseAbs().maxCoeff() <= 5.0);
  }
  SUBCASE("window outside recording") {
    const Recording r = constant_recording(1, 20, 0.0);
    CHECK_THROWS_AS(interpolate_artifact(r, -50, 10, 0.0, 1), RangeError);
  }
}

TEST_CASE("high-pass contracts") {
  SUBCASE("DC decays") {
    const Recording r = constant_recording(1, 40000, 1.0);
    const Recording out = butterworth_highpass(r, 0.5, 2, false);
    CHECK(out.data.rightCols(10000).cwiseAbs().mean() < 1e-6);
  }
  SUBCASE("-3 dB at the cutoff, single pass") {
    const SosFilter hp = butterworth_highpass_design(0.5, 2, 1000);
    CHECK(20 * std::log10(sos_gain(hp, 0.5, 1000)) == doctest::Approx(-3.0103).epsilon(0.1 / 3.0103));
    const Recording r = sine_recording({{0.5, 1.0}}, 1000, 400);
    const Recording out = butterworth_highpass(r, 0.5, 2, false);
    const VectorXd tail_in = r.data.row(0).tail(200000).transpose(), tail_out = out.data.row(0).tail(200000).transpose();
    CHECK(std::abs(20 * std::log10(rms(tail_out) / rms(tail_in)) + 3.0103) <= 0.1);
  }
  SUBCASE("50 Hz passes at 5 kHz") {
    const Recording r = sine_recording({{50.0, 1.0}}, 5000, 4);
    const Recording out = butterworth_highpass(r, 0.5, 2, true);
    const VectorXd mid = out.data.row(0).segment(5000, 10000).transpose();
    const VectorXd ref = r.data.row(0).segment(5000, 10000).transpose();
    CHECK(std::abs(rms(mid) / rms(ref) - 1.0) <= 0.01);
  }
  SUBCASE("cutoff at Nyquist rejected") {
    CHECK_THROWS_AS(butterworth_highpass_design(500, 2, 1000), ConfigError);
  }
}

TEST_CASE("notch contracts") {
  const SosFilter notch = notch_design(50, 2, 1000);
  CHECK(20 * std::log10(sos_gain(notch, 40, 1000)) >= -1.0);
  CHECK(20 * std::log10(sos_gain(notch, 60, 1000)) >= -1.0);
  SUBCASE("line sinusoid attenuated") {
    const Recording r = sine_recording({{50.0, 1.0}}, 1000, 10);
    const Recording out = notch_filter(r, 50, 2, false);
    CHECK(rms(out.data.row(0).tail(5000).transpose()) <= 0.032 * rms(r.data.row(0).tail(5000).transpose()));
  }
  SUBCASE("DC unchanged") {
    const Recording r = constant_recording(1, 3000, 2.0);
    const Recording out = notch_filter(r, 50, 2, true);
    CHECK((out.data.array() - 2.0).abs().maxCoeff() <= 2e-6);
  }
  SUBCASE("10 Hz preserved next to 50 Hz") {
    const Recording r = sine_recording({{10.0, 1.0}, {50.0, 1.0}}, 1000, 4);
    const Recording out = notch_filter(r, 50, 2, true);
    const VectorXd mid = out.data.row(0).segment(1000, 2000).transpose();
    CHECK(amplitude_at(mid, 10, 1000) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(amplitude_at(mid, 50, 1000) < 0.032);
  }
  CHECK_THROWS_AS(notch_design(600, 2, 1000), ConfigError);
}

TEST_CASE("filters are time invariant away from the edges") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  VectorXd x = VectorXd::Zero(4000);
  for (Index i = 1000; i < 2000; ++i) x(i) = n(rng);
  VectorXd shifted = VectorXd::Zero(4000);
  shifted.segment(1100, 1000) = x.segment(1000, 1000);
  for (const SosFilter& sos : {butterworth_highpass_design(0.5, 2, 1000), notch_design(50, 2, 1000)}) {
    const VectorXd y = sosfilt(sos, x), ys = sosfilt(sos, shifted);
    CHECK((ys.segment(1100, 2800) - y.segment(1000, 2800)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("epoching") {
  Recording r = constant_recording(2, 40000, 0.0, 5000);
  r.t0_index = 12000;
  CHECK(epoch(r).n_samples() == 30000);
  Recording k = constant_recording(2, 3000, 0.0, 1000);
  const Epoch e = epoch(k, 0.5, 0.5);
  CHECK(e.n_samples() == 1000);
  CHECK(e.data.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(epoch(k, 2.0, 4.0), RangeError);
}

TEST_CASE("noise covariance estimation") {
  SUBCASE("constant baseline gives the floor") {
    const Recording r = constant_recording(3, 1000, 1.0);
    const NoiseCovariance c = estimate_noise_covariance(r, -0.4, -0.01, 1e-6);
    CHECK((c.matrix - 1e-6 * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-18);
  }
  SUBCASE("white noise recovers identity") {
    const MatrixXd s = sample_gaussian_noise(MatrixXd::Identity(4, 4), 100000, 3);
    const NoiseCovariance c = covariance_from_samples(s, 0.0);
    CHECK((c.matrix - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.05);
    c.validate();
  }
  SUBCASE("perfectly correlated channels") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 1);
    MatrixXd s(2, 500);
    for (Index i = 0; i < 500; ++i) s(0, i) = n(rng), s(1, i) = 3.0 * s(0, i);
    const NoiseCovariance c = covariance_from_samples(s, 0.0);
    CHECK(c.matrix(0, 1) == doctest::Approx(std::sqrt(c.matrix(0, 0) * c.matrix(1, 1))).epsilon(1e-9));
  }
  SUBCASE("too short") {
    const Recording r = constant_recording(30, 1000, 1.0);
    CHECK_THROWS_AS(estimate_noise_covariance(r, -0.02, -0.01), InsufficientDataError);
  }
}

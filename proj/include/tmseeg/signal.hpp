#pragma once

#include "tmseeg/headmodel.hpp"
#include "tmseeg/types.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tmseeg {

struct Annotation {
  std::string label;
  Index start = 0;
  Index end = 0;
};

/// Multichannel sensor time series. Sample `t0_index` is the pulse (t = 0).
struct Recording {
  MatrixXd data;  // n_sensors x n_samples, volts
  double sample_rate = 1000.0;
  Index t0_index = 0;
  std::vector<Annotation> annotations;

  Index n_channels() const { return data.rows(); }
  Index n_samples() const { return data.cols(); }
  /// Sample index of time `t_s` seconds relative to the pulse.
  Index index_of(double t_s) const;
  void validate() const;
};

struct NoiseCovariance {
  MatrixXd matrix;
  Index n_samples_used = 0;
  double regularization_floor = 0.0;

  void validate() const;
  static NoiseCovariance identity(Index n, double variance = 1.0);
};

/// A slice of a recording around the pulse: `pre_s` before, `post_s` after.
struct Epoch {
  MatrixXd data;
  double sample_rate = 1000.0;
  double pre_s = 0.0;
  double post_s = 0.0;

  Index n_samples() const { return data.cols(); }
  /// Column holding the pulse sample.
  Index t0_index() const;
  Index index_of(double t_s) const { return t0_index() + static_cast<Index>(std::llround(t_s * sample_rate)); }
  void validate() const;
};

// ---------------------------------------------------------------------------
// Scenario

enum class Waveform {
  sine_burst,   // amplitude * sin(2 pi f (t - onset) + phase) inside [onset, offset)
  step,         // amplitude inside [onset, offset)
  oscillator,   // noise-driven resonator at `frequency` with `bandwidth`
};

std::string to_string(Waveform w);
Waveform waveform_from_string(const std::string& s);

/// One source-activity primitive. Times are seconds relative to the pulse;
/// a missing onset means "from the first sample", a missing offset "to the end".
struct SourceActivity {
  Index source = 0;
  Waveform waveform = Waveform::sine_burst;
  double frequency = 10.0;   // Hz
  double amplitude = 1e-8;   // A·m (RMS for oscillators)
  std::optional<double> onset_s;
  std::optional<double> offset_s;
  double phase = 0.0;
  double bandwidth = 2.0;    // Hz, oscillator only
  int group = -1;            // oscillators with the same group share a driver
  double coupling_before = 0.0;  // weight of the shared driver before the pulse
  double coupling_after = 0.0;   // and after it
  std::optional<Vector3d> orientation;  // free-orientation spaces; default radial
};

struct Scenario {
  std::vector<SourceActivity> activities;
  double pulse_time_s = 2.0;             // time of t = 0 from the first sample
  bool tms_artifact = false;
  double artifact_amplitude = 1e-3;      // V, peak of the biphasic transient
  double artifact_start_ms = -5.0;
  double artifact_end_ms = 10.0;
};

/// Deterministic RNG stream for (seed, stream id, tag).
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag);

/// Source amplitude matrix S (gain columns x samples) for a scenario.
MatrixXd source_waveforms(const GainMatrix& gain, const Scenario& scenario, double sample_rate,
                          Index n_samples, std::uint64_t seed);

/// M = G S + N, plus the optional TMS artifact.
Recording simulate_recording(const GainMatrix& gain, const Scenario& scenario,
                             const NoiseCovariance& noise, double sample_rate, double duration_s,
                             std::uint64_t seed);

/// Gaussian samples with covariance `cov` (n_channels x n_samples).
MatrixXd sample_gaussian_noise(const MatrixXd& cov, Index n_samples, std::uint64_t seed,
                               std::uint64_t tag = 0);

// ---------------------------------------------------------------------------
// Preprocessing

Recording interpolate_artifact(const Recording& rec, double cut_start_ms = -5.0,
                               double cut_end_ms = 10.0, double noise_scale = 1.0,
                               std::uint64_t seed = 0);

/// Second-order section, transposed direct form II, a0 normalized to 1.
struct Biquad {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

using SosFilter = std::vector<Biquad>;

SosFilter butterworth_highpass_design(double cutoff_hz, int order, double sample_rate);
SosFilter notch_design(double line_hz, double bandwidth_hz, double sample_rate);

/// Complex frequency response magnitude of the cascade at `freq_hz`.
double sos_gain(const SosFilter& sos, double freq_hz, double sample_rate);

/// Single pass with step-response initial conditions scaled by the first sample.
VectorXd sosfilt(const SosFilter& sos, ConstRefVec x);
/// Forward-backward with odd-extension padding.
VectorXd sosfiltfilt(const SosFilter& sos, ConstRefVec x);

Recording butterworth_highpass(const Recording& rec, double cutoff_hz = 0.5, int order = 2,
                               bool zero_phase = true);
Recording notch_filter(const Recording& rec, double line_hz = 50.0, double bandwidth_hz = 2.0,
                       bool zero_phase = true);

Epoch epoch(const Recording& rec, double pre_s = 2.0, double post_s = 4.0);

/// Default floor is 1e-10 * trace / n; pass a value to override.
NoiseCovariance estimate_noise_covariance(const Recording& rec, double start_s, double end_s,
                                          std::optional<double> regularization_floor = {});
NoiseCovariance estimate_noise_covariance(const Epoch& ep, double start_s, double end_s,
                                          std::optional<double> regularization_floor = {});
NoiseCovariance covariance_from_samples(const MatrixXd& samples,
                                        std::optional<double> regularization_floor = {});

}  // namespace tmseeg

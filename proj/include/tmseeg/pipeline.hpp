#pragma once

#include "tmseeg/connectivity.hpp"
#include "tmseeg/headmodel.hpp"
#include "tmseeg/inverse.hpp"
#include "tmseeg/io.hpp"
#include "tmseeg/signal.hpp"
#include "tmseeg/wmem.hpp"
#include "tmseeg/zones.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tmseeg {

struct GeometryConfig {
  Index n_sensors = 62;
  Index n_sources = 200;
  double source_radius = 0.07;
  OrientationMode orientation = OrientationMode::fixed;
  Reference reference = Reference::average;
  Index reference_index = 0;
  Index neighbors = 6;
  int series_terms = kDefaultSeriesTerms;
  double cap_z_min = -0.3;
  std::vector<Shell> shells = default_shells();
};

struct SimulationConfig {
  double sample_rate = 1000.0;
  double duration_s = 6.0;
  double pulse_time_s = 2.0;
  double noise_std = 1e-7;            // V, white sensor noise
  bool tms_artifact = true;
  double artifact_amplitude = 1e-3;
  std::string scenario = "coupled_alpha";  // coupled_alpha | custom | none
  // coupled_alpha: spread-out drivers in each hemisphere sharing one group
  Index drivers_per_hemisphere = 5;
  double driver_frequency = 10.0;
  double driver_amplitude = 2e-8;
  double driver_bandwidth = 2.0;
  double driver_onset_s = -1.5;
  double coupling_before = 0.0;
  double coupling_after = 0.95;
  std::vector<SourceActivity> activities;  // custom
};

struct PreprocessConfig {
  bool interpolate_artifact = true;
  double cut_start_ms = -5.0;
  double cut_end_ms = 10.0;
  double highpass_hz = 0.5;  // 0 disables
  int highpass_order = 2;
  double notch_hz = 50.0;    // 0 disables
  double notch_bandwidth_hz = 2.0;
  bool zero_phase = true;
  double epoch_pre_s = 2.0;
  double epoch_post_s = 4.0;
  double baseline_start_s = -2.0;
  double baseline_end_s = -1.55;
};

struct InverseConfig {
  std::vector<Method> methods{Method::mne, Method::dspm, Method::sloreta, Method::wmem};
  double snr = 3.0;
  std::optional<double> lambda;  // default: from snr
  double gamma_depth = 0.5;
  Index parcels = 10;
  WmemConfig wmem;
  std::optional<std::pair<double, double>> wmem_band;  // Hz
};

struct ConnectivityConfig {
  double threshold = 0.7;
  double max_lag_s = 0.1;
  ScoutPlacement placement;
  double before_start_s = -1.4, before_end_s = -0.05;
  double after_start_s = 0.05, after_end_s = 1.4;
  Index intra_vertices = 15;
};

struct ZonesConfig {
  Index k = 3;
  std::vector<ZoneWindow> windows = default_zone_windows();
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  GeometryConfig geometry;
  SimulationConfig simulation;
  PreprocessConfig preprocess;
  InverseConfig inverse;
  ConnectivityConfig connectivity;
  ZonesConfig zones;

  /// Parses and validates; unknown or ill-typed fields raise ConfigError
  /// naming their path (e.g. "config.geometry.n_sources").
  static PipelineConfig from_json(const Json& j);
  static PipelineConfig load(const fs::path& path);
  Json to_json() const;
  /// Hash of the canonical, fully defaulted config.
  std::string hash() const;
  /// Cross-field checks against every stage's preconditions.
  void validate() const;
};

std::string display_name(Method m);

GainMatrix build_gain(const PipelineConfig& cfg);
Scenario build_scenario(const PipelineConfig& cfg, const GainMatrix& gain);
Recording simulate(const PipelineConfig& cfg, const GainMatrix& gain);
Epoch preprocess(const PipelineConfig& cfg, const Recording& rec);
NoiseCovariance baseline_covariance(const PipelineConfig& cfg, const Epoch& ep);
MatrixXd baseline_segment(const PipelineConfig& cfg, const Epoch& ep);

struct Localization {
  SourceEstimate estimate;
  std::optional<InverseKernel> kernel;
  std::vector<BoxDiagnostic> diagnostics;
  Json provenance;
};

Localization localize(const PipelineConfig& cfg, const GainMatrix& gain, const Epoch& ep, Method method);

struct ConnectivityResult {
  std::vector<Scout> scouts;
  ConnectivityGraph inter_before, inter_after;
  ConnectivityGraph intra_before, intra_after;
  std::vector<Index> intra_sources;
};

/// Scouts and intra-zone vertices shared by every estimate in a comparison.
struct ScoutLayout {
  std::vector<Scout> scouts;     // members only; series are filled per estimate
  std::vector<Index> intra_sources;
};

/// Places scouts on the consensus map: the mean over estimates of each one's
/// integrated |activity| divided by its maximum. Intra-zone vertices are the
/// sources nearest (in hops, then index) to the strongest scout center.
ScoutLayout place_scouts(const PipelineConfig& cfg, const GainMatrix& gain,
                         const std::vector<const SourceEstimate*>& estimates);

ConnectivityResult analyze_connectivity(const PipelineConfig& cfg, const GainMatrix& gain,
                                        const SourceEstimate& est, const ScoutLayout& layout);
/// Layout placed from `est` alone.
ConnectivityResult analyze_connectivity(const PipelineConfig& cfg, const GainMatrix& gain,
                                        const SourceEstimate& est);

using NamedEstimates = std::vector<std::pair<std::string, SourceEstimate>>;

/// Writes the comparison bundle (Kansky tables, graphs, chord diagrams,
/// zone tables, summary.json) under `out_dir`. Needs at least two estimates;
/// repeated names get a "#n" suffix.
Json compare_estimates(const PipelineConfig& cfg, const GainMatrix& gain, const NamedEstimates& estimates,
                       const fs::path& out_dir);

// File-level stages used by the CLI. Inputs carrying a different config hash
// are rejected.
void run_simulate(const PipelineConfig& cfg, const fs::path& dir);
void run_preprocess(const PipelineConfig& cfg, const fs::path& dir);
void run_localize(const PipelineConfig& cfg, const fs::path& dir, Method method,
                  const std::optional<fs::path>& epoch_stem = {});
void run_scouts(const PipelineConfig& cfg, const fs::path& dir, Method method);
void run_connectivity(const PipelineConfig& cfg, const fs::path& dir, Method method);
void run_zones(const PipelineConfig& cfg, const fs::path& dir, Method method);
void run_compare(const PipelineConfig& cfg, const fs::path& dir, const std::vector<fs::path>& estimate_stems = {});
/// simulate -> preprocess -> localize (all configured methods) -> compare.
void run_report(const PipelineConfig& cfg, const fs::path& dir);

}  // namespace tmseeg

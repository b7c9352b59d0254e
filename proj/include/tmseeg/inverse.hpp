#pragma once

#include "tmseeg/headmodel.hpp"
#include "tmseeg/signal.hpp"
#include "tmseeg/types.hpp"

#include <string>

namespace tmseeg {

enum class Method { mne, dspm, sloreta, wmem };

std::string to_string(Method m);
/// Throws ConfigError listing the four valid names.
Method method_from_string(const std::string& s);

/// Linear sensor-to-source operator and how it was normalized.
struct InverseKernel {
  MatrixXd kernel;  // n_columns x n_sensors
  Method method = Method::mne;
  double lambda = 0.0;
  double gamma_depth = 0.0;
  VectorXd normalization;  // per source: ones (MNE), v (dSPM) or r (sLORETA)
  OrientationMode orientation_mode = OrientationMode::fixed;
  std::string gain_hash;
  std::string covariance_hash;

  Index columns_per_source() const {
    return orientation_mode == OrientationMode::free ? 3 : 1;
  }
  Index n_sources() const { return kernel.rows() / columns_per_source(); }
  void validate() const;
};

/// Source-space time series or statistic map.
struct SourceEstimate {
  MatrixXd values;  // rows are gain columns, or sources after a norm collapse
  Method method = Method::mne;
  double sample_rate = 1000.0;
  Index t0_index = 0;
  Index columns_per_source = 1;
  bool power = false;

  Index n_sources() const { return values.rows() / columns_per_source; }
  Index n_samples() const { return values.cols(); }
  Index index_of(double t_s) const {
    return t0_index + static_cast<Index>(std::llround(t_s * sample_rate));
  }
  /// Per-source magnitude (|value| or 3-vector norm) at every sample.
  MatrixXd magnitudes() const;
  void validate() const;
};

inline constexpr double kMaxCondition = 1e12;

/// lambda^2 = trace(G R G^T) / (snr^2 trace(C)).
double lambda_from_snr(const GainMatrix& gain, const NoiseCovariance& cov, double gamma_depth,
                       double snr = 3.0);

/// R G^T (G R G^T + lambda^2 C)^-1 for a plain matrix G and per-column
/// source variances `column_variance`. The system is whitened by C^-1/2 and
/// solved by Cholesky; ConditioningError when the estimated condition number
/// exceeds kMaxCondition.
MatrixXd regularized_inverse(const MatrixXd& gain, const MatrixXd& noise_cov,
                             ConstRefVec column_variance, double lambda);

InverseKernel mne_kernel(const GainMatrix& gain, const NoiseCovariance& cov, double gamma_depth,
                         double lambda);

/// `source_variance` is per source (the diagonal of C_s, shared by the three
/// columns of a free-orientation source).
InverseKernel dspm_kernel(const GainMatrix& gain, const NoiseCovariance& noise_cov,
                          ConstRefVec source_variance, double lambda);
InverseKernel dspm_kernel(const GainMatrix& gain, const NoiseCovariance& noise_cov,
                          double gamma_depth, double lambda);

InverseKernel sloreta_kernel(const GainMatrix& gain, const NoiseCovariance& cov,
                             double gamma_depth, double lambda);

/// Per-column diagonal of the resolution matrix P G.
VectorXd resolution_diagonal(const MatrixXd& inverse_operator, const MatrixXd& gain);

/// phi = j^2 / Res_ii.
inline double sloreta_power(double current, double resolution_ii) {
  return current * current / resolution_ii;
}

enum class ApplyMode {
  values,  // K * data
  power,   // squared values (sLORETA phi); summed over components when collapsed
};

SourceEstimate apply_kernel(const InverseKernel& k, const Epoch& ep,
                            ApplyMode mode = ApplyMode::values, bool collapse_orientations = false);

/// Collapse each free-orientation source to its 3-vector norm.
SourceEstimate collapse_orientations(const SourceEstimate& est);

}  // namespace tmseeg

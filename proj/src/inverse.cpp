#include "tmseeg/inverse.hpp"

#include "tmseeg/error.hpp"
#include "tmseeg/hash.hpp"
#include "tmseeg/log.hpp"

#include <cmath>
#include <cstdio>

namespace tmseeg {

std::string to_string(Method m) {
  switch (m) {
    case Method::mne: return "mne";
    case Method::dspm: return "dspm";
    case Method::sloreta: return "sloreta";
    case Method::wmem: return "wmem";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "mne") return Method::mne;
  if (s == "dspm") return Method::dspm;
  if (s == "sloreta") return Method::sloreta;
  if (s == "wmem") return Method::wmem;
  throw ConfigError("unknown method '" + s + "' (valid: mne, dspm, sloreta, wmem)");
}

void InverseKernel::validate() const {
  if (!kernel.allFinite()) throw NormalizationError("inverse kernel has non-finite entries");
  if (kernel.rows() % columns_per_source() != 0)
    throw DimensionError("kernel rows are not a multiple of the orientation block size");
  if (normalization.size() != n_sources())
    throw DimensionError("normalization length differs from source count");
  if (method == Method::dspm || method == Method::sloreta) {
    if ((normalization.array() <= 0).any())
      throw NormalizationError("normalization vector must be strictly positive");
  }
}

MatrixXd SourceEstimate::magnitudes() const {
  if (columns_per_source == 1) return values.cwiseAbs();
  MatrixXd out(n_sources(), n_samples());
  for (Index p = 0; p < n_sources(); ++p)
    out.row(p) = values.middleRows(p * columns_per_source, columns_per_source).colwise().norm();
  return out;
}

void SourceEstimate::validate() const {
  if (!values.allFinite()) throw DomainError("source estimate has non-finite values");
  if (columns_per_source < 1 || values.rows() % columns_per_source != 0)
    throw DimensionError("source estimate rows do not match the orientation block size");
  if (!(sample_rate > 0)) throw DomainError("source estimate sample rate must be positive");
  if (t0_index < 0 || (values.cols() > 0 && t0_index >= values.cols()))
    throw DomainError("source estimate t0 index out of range");
  if (power && (values.array() < 0).any()) throw DomainError("power estimate has negative values");
}

namespace {

VectorXd column_variance(const GainMatrix& gain, ConstRefVec per_source) {
  const Index per = gain.columns_per_source();
  VectorXd out(gain.matrix.cols());
  for (Index p = 0; p < gain.n_sources(); ++p) out.segment(p * per, per).setConstant(per_source(p));
  return out;
}

// Sum of `values` over each source's column block.
VectorXd block_sum(ConstRefVec values, Index per) {
  const Index n = values.size() / per;
  VectorXd out(n);
  for (Index p = 0; p < n; ++p) out(p) = values.segment(p * per, per).sum();
  return out;
}

std::string lambda_text(double lambda) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", lambda);
  return buf;
}

InverseKernel make_kernel(const GainMatrix& gain, const NoiseCovariance& cov, Method method,
                          double gamma_depth, double lambda) {
  InverseKernel k;
  k.method = method;
  k.lambda = lambda;
  k.gamma_depth = gamma_depth;
  k.orientation_mode = gain.orientation_mode;
  k.gain_hash = hash_hex(gain.matrix);
  k.covariance_hash = hash_hex(cov.matrix);
  return k;
}

void check_inputs(const GainMatrix& gain, const NoiseCovariance& cov, double lambda) {
  if (!(lambda > 0)) throw ConfigError("lambda must be positive");
  if (cov.matrix.rows() != gain.n_sensors())
    throw DimensionError("noise covariance size differs from sensor count");
  if (gain.matrix.cwiseAbs().maxCoeff() == 0) throw DomainError("gain matrix is zero");
  cov.validate();
}

}  // namespace

double lambda_from_snr(const GainMatrix& gain, const NoiseCovariance& cov, double gamma_depth,
                       double snr) {
  if (!(snr > 0)) throw ConfigError("snr must be positive");
  const VectorXd r = column_variance(gain, depth_weights(gain, gamma_depth));
  const double signal = (gain.matrix * r.asDiagonal() * gain.matrix.transpose()).trace();
  return std::sqrt(signal / (snr * snr * cov.matrix.trace()));
}

MatrixXd regularized_inverse(const MatrixXd& gain, const MatrixXd& noise_cov,
                             ConstRefVec column_variance, double lambda) {
  if (!(lambda > 0)) throw ConfigError("lambda must be positive");
  if (noise_cov.rows() != gain.rows() || column_variance.size() != gain.cols())
    throw DimensionError("regularized_inverse: inconsistent shapes");

  Eigen::SelfAdjointEigenSolver<MatrixXd> ces(noise_cov);
  const VectorXd evals = ces.eigenvalues();
  if (evals.minCoeff() <= 0)
    throw CovarianceError("noise covariance is not positive definite; raise its regularization floor");
  const MatrixXd whitener =
      ces.eigenvectors() * evals.cwiseSqrt().cwiseInverse().asDiagonal() * ces.eigenvectors().transpose();

  const MatrixXd wg = whitener * gain;
  MatrixXd a = wg * column_variance.asDiagonal() * wg.transpose();
  a.diagonal().array() += lambda * lambda;
  a = 0.5 * (a + a.transpose());

  MatrixXd a_inv;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) {
    const double condition = 1.0 / llt.rcond();
    if (!(condition <= kMaxCondition))
      throw ConditioningError("G R G^T + lambda^2 C is numerically singular (condition ~" +
                              lambda_text(condition) + ") at lambda = " + lambda_text(lambda));
    a_inv = llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    const double top = es.eigenvalues().maxCoeff();
    const double floor = top / kMaxCondition;
    if (!(top > 0)) throw ConditioningError("regularized system is zero at lambda = " + lambda_text(lambda));
    const double condition = top / std::max(es.eigenvalues().minCoeff(), 0.0);
    if (!(condition <= kMaxCondition))
      throw ConditioningError("G R G^T + lambda^2 C is numerically singular (condition ~" +
                              lambda_text(condition) + ") at lambda = " + lambda_text(lambda));
    log_warning("Cholesky failed at lambda = " + lambda_text(lambda) +
                "; using eigenvalue-floored pseudo-solve");
    const VectorXd inv = es.eigenvalues().cwiseMax(floor).cwiseInverse();
    a_inv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  }
  return column_variance.asDiagonal() * wg.transpose() * a_inv * whitener;
}

InverseKernel mne_kernel(const GainMatrix& gain, const NoiseCovariance& cov, double gamma_depth,
                         double lambda) {
  check_inputs(gain, cov, lambda);
  InverseKernel k = make_kernel(gain, cov, Method::mne, gamma_depth, lambda);
  const VectorXd r = column_variance(gain, depth_weights(gain, gamma_depth));
  k.kernel = regularized_inverse(gain.matrix, cov.matrix, r, lambda);
  k.normalization = VectorXd::Ones(gain.n_sources());
  k.validate();
  return k;
}

InverseKernel dspm_kernel(const GainMatrix& gain, const NoiseCovariance& noise_cov,
                          ConstRefVec source_variance, double lambda) {
  check_inputs(gain, noise_cov, lambda);
  if (source_variance.size() != gain.n_sources())
    throw DimensionError("source covariance length differs from source count");
  if ((source_variance.array() <= 0).any())
    throw ConfigError("source covariance must be strictly positive");
  InverseKernel k = make_kernel(gain, noise_cov, Method::dspm, 0.0, lambda);
  const Index per = gain.columns_per_source();
  const MatrixXd p = regularized_inverse(gain.matrix, noise_cov.matrix,
                                         column_variance(gain, source_variance), lambda);
  // v = diag(P C_n P^T), summed over a free source's three rows.
  const VectorXd row_var = (p * noise_cov.matrix).cwiseProduct(p).rowwise().sum();
  const VectorXd v = block_sum(row_var, per);
  for (Index i = 0; i < v.size(); ++i) {
    if (!(v(i) > 0))
      throw NormalizationError("dSPM noise variance of source " + std::to_string(i) +
                               " is not positive; check the noise covariance");
  }
  k.kernel = p;
  for (Index i = 0; i < v.size(); ++i) k.kernel.middleRows(i * per, per) /= std::sqrt(v(i));
  k.normalization = v;
  k.validate();
  return k;
}

InverseKernel dspm_kernel(const GainMatrix& gain, const NoiseCovariance& noise_cov,
                          double gamma_depth, double lambda) {
  InverseKernel k = dspm_kernel(gain, noise_cov, depth_weights(gain, gamma_depth), lambda);
  k.gamma_depth = gamma_depth;
  return k;
}

VectorXd resolution_diagonal(const MatrixXd& inverse_operator, const MatrixXd& gain) {
  return inverse_operator.cwiseProduct(gain.transpose()).rowwise().sum();
}

InverseKernel sloreta_kernel(const GainMatrix& gain, const NoiseCovariance& cov, double gamma_depth,
                             double lambda) {
  check_inputs(gain, cov, lambda);
  InverseKernel k = make_kernel(gain, cov, Method::sloreta, gamma_depth, lambda);
  const Index per = gain.columns_per_source();
  const VectorXd r_cols = column_variance(gain, depth_weights(gain, gamma_depth));
  const MatrixXd p = regularized_inverse(gain.matrix, cov.matrix, r_cols, lambda);
  const VectorXd r = block_sum(resolution_diagonal(p, gain.matrix), per);
  for (Index i = 0; i < r.size(); ++i) {
    if (!(r(i) > 0))
      throw NormalizationError("resolution diagonal of source " + std::to_string(i) +
                               " is not positive");
  }
  k.kernel = p;
  for (Index i = 0; i < r.size(); ++i) k.kernel.middleRows(i * per, per) /= std::sqrt(r(i));
  k.normalization = r;
  k.validate();
  return k;
}

SourceEstimate collapse_orientations(const SourceEstimate& est) {
  if (est.columns_per_source == 1) return est;
  SourceEstimate out = est;
  out.columns_per_source = 1;
  out.values.resize(est.n_sources(), est.n_samples());
  for (Index p = 0; p < est.n_sources(); ++p) {
    const auto block = est.values.middleRows(p * est.columns_per_source, est.columns_per_source);
    if (est.power)
      out.values.row(p) = block.colwise().sum();
    else
      out.values.row(p) = block.colwise().norm();
  }
  return out;
}

SourceEstimate apply_kernel(const InverseKernel& k, const Epoch& ep, ApplyMode mode,
                            bool collapse) {
  if (k.kernel.cols() != ep.data.rows())
    throw DimensionError("kernel expects " + std::to_string(k.kernel.cols()) +
                         " sensors, epoch has " + std::to_string(ep.data.rows()));
  SourceEstimate est;
  est.method = k.method;
  est.sample_rate = ep.sample_rate;
  est.t0_index = ep.t0_index();
  est.columns_per_source = k.columns_per_source();
  est.values = k.kernel * ep.data;
  if (mode == ApplyMode::power) {
    est.values = est.values.cwiseAbs2();
    est.power = true;
  }
  return collapse ? collapse_orientations(est) : est;
}

}  // namespace tmseeg

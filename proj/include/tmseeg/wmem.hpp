#pragma once

#include "tmseeg/headmodel.hpp"
#include "tmseeg/inverse.hpp"
#include "tmseeg/signal.hpp"
#include "tmseeg/types.hpp"
#include "tmseeg/wavelet.hpp"

#include <cstdint>
#include <vector>

namespace tmseeg {

/// Partition of the source space into connected parcels.
struct Parcellation {
  std::vector<Index> assignment;           // source -> parcel id
  std::vector<std::vector<Index>> members; // parcel id -> sorted sources

  Index size() const { return static_cast<Index>(members.size()); }
  void validate(const SourceSpace& space) const;
};

/// Farthest-point seeds (the first drawn from `seed`), then balanced region
/// growing: the smallest parcel with a free neighbor always grows next.
Parcellation parcellate(const SourceSpace& space, Index n_parcels, std::uint64_t seed);

/// Bernoulli-Gaussian reference: parcel k is inactive (point mass at 0) with
/// probability 1 - alpha_k, otherwise N(mean_k, sigma2_k I) over its columns.
struct MemReferenceLaw {
  Parcellation parcels;
  Index columns_per_source = 1;
  VectorXd alpha;                // per parcel, in (0, 1)
  VectorXd sigma2;               // per parcel, > 0
  std::vector<VectorXd> mean;    // per parcel over its columns; empty = zero

  Index n_columns() const { return static_cast<Index>(parcels.assignment.size()) * columns_per_source; }
  /// Gain columns owned by parcel k.
  std::vector<Index> columns(Index k) const;
  void validate() const;

  static MemReferenceLaw uniform(const Parcellation& parcels, Index columns_per_source,
                                 double alpha, double sigma2);
};

/// Reference law with a common variance chosen so the prior's expected data
/// energy, sum_k alpha_k sigma2 |G_k|_F^2, equals the data energy in excess
/// of the noise floor (at least a tenth of the larger of the two).
MemReferenceLaw energy_scaled_law(const MatrixXd& gain, const Parcellation& parcels,
                                  Index columns_per_source, ConstRefVec data, double noise_var,
                                  double alpha = 0.5);

/// D(xi) = F*(G^T xi) + noise_var/2 |xi|^2 - xi^T m, with F* the
/// log-partition of the reference law.
class MemDual {
 public:
  MemDual(const MatrixXd& gain, const MemReferenceLaw& law, ConstRefVec data, double noise_var);

  double value(ConstRefVec xi, VectorXd* gradient = nullptr) const;
  MatrixXd hessian(ConstRefVec xi) const;
  /// E_p[w] = grad F*(G^T xi).
  VectorXd expected_sources(ConstRefVec xi) const;
  /// KL divergence of the tilted law from the reference.
  double entropy_drop(ConstRefVec xi) const;
  /// F*(u) for u = G^T xi.
  double log_partition(ConstRefVec u) const;

  Index dimension() const { return gain_.rows(); }

 private:
  struct ParcelTerms {
    double log_partition;
    double active_prob;   // pi_k
    double tilt;          // s_k = u_k . mu_k + sigma2_k |u_k|^2 / 2
  };
  ParcelTerms parcel_terms(Index k, ConstRefVec u) const;

  const MatrixXd& gain_;
  const MemReferenceLaw& law_;
  VectorXd data_;
  double noise_var_;
  std::vector<std::vector<Index>> cols_;
};

struct MemSolution {
  VectorXd expected_sources;
  VectorXd dual_point;
  double entropy_drop = 0.0;
  double data_residual = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Minimizes the MEM dual by BFGS with backtracking, starting at xi = 0 with
/// the exact inverse Hessian there. SolverError if `max_iter` is exhausted.
MemSolution mem_solve(ConstRefVec data, const MatrixXd& gain, const MemReferenceLaw& law,
                      double noise_var, int max_iter = 500, double tol = 1e-8);
MemSolution mem_solve(ConstRefVec data, const GainMatrix& gain, const MemReferenceLaw& law,
                      double noise_var, int max_iter = 500, double tol = 1e-8);

struct WmemConfig {
  int wavelet_order = 4;
  int levels = 6;
  BoundaryMode boundary = BoundaryMode::periodic;
  double box_selection = 0.99;  // fraction of box energy to process
  double alpha = 0.5;
  int max_iter = 500;
  double tol = 1e-8;
  std::vector<int> scales;      // restrict to these scales (levels+1 = approximation); empty = all
};

struct BoxDiagnostic {
  int scale = 0;
  Index box = 0;
  double energy = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  double entropy_drop = 0.0;
  bool converged = false;
};

/// Per-scale noise variances (scales 1..levels, then approximation) from
/// baseline coefficients, shrunk toward the channel median with weight j/(levels+1).
std::vector<VectorXd> scale_noise_variances(const WaveletDecomposition& baseline,
                                            Index baseline_length);

SourceEstimate wmem_localize(const Epoch& ep, const GainMatrix& gain, const Parcellation& parcels,
                             const MatrixXd& baseline, const WmemConfig& config = {},
                             std::vector<BoxDiagnostic>* diagnostics = nullptr);

}  // namespace tmseeg

#pragma once

#include "tmseeg/signal.hpp"
#include "tmseeg/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace tmseeg {

/// Orthogonal two-channel filter bank.
struct Wavelet {
  std::string family = "db";
  int order = 4;        // vanishing moments
  VectorXd lowpass;     // analysis scaling filter, sums to sqrt(2)
  VectorXd highpass;    // g[m] = (-1)^m h[L-1-m]

  std::string name() const { return family + std::to_string(order); }
};

/// Daubechies wavelet with `vanishing_moments` (2N taps), built by spectral
/// factorization of the Daubechies polynomial. Supports 1..20.
Wavelet daubechies(int vanishing_moments);

enum class BoundaryMode {
  periodic,  // pad with zeros to the next power of two, wrap around
  zero_pad,  // pad with zeros to twice that length so nothing wraps into data
};

std::string to_string(BoundaryMode m);
BoundaryMode boundary_mode_from_string(const std::string& s);

/// Per-channel multilevel DWT. details[j-1] holds scale j (j = 1 is the
/// finest); each is n_channels x (padded_length / 2^j).
struct WaveletDecomposition {
  std::vector<MatrixXd> details;
  MatrixXd approximation;  // n_channels x (padded_length / 2^levels)
  Wavelet wavelet;
  BoundaryMode boundary = BoundaryMode::periodic;
  Index original_length = 0;
  Index padded_length = 0;
  double sample_rate = 1000.0;
  double pre_s = 0.0;
  double post_s = 0.0;

  int levels() const { return static_cast<int>(details.size()); }
  Index n_channels() const { return approximation.rows(); }
  /// Pass band of detail scale j, Hz.
  std::pair<double, double> band(int j) const;
  /// Total coefficient count per channel (equals padded_length).
  Index coefficient_count() const;
};

WaveletDecomposition dwt(const MatrixXd& data, double sample_rate, const Wavelet& wavelet,
                         int levels, BoundaryMode boundary = BoundaryMode::periodic);
WaveletDecomposition dwt(const Epoch& ep, const Wavelet& wavelet, int levels,
                         BoundaryMode boundary = BoundaryMode::periodic);

/// Inverse transform truncated to the original length.
MatrixXd idwt_matrix(const WaveletDecomposition& dec);
Epoch idwt(const WaveletDecomposition& dec);

/// Single-level periodic analysis / synthesis on one even-length signal.
void dwt_step(const Wavelet& w, ConstRefVec x, VectorXd& approx, VectorXd& detail);
VectorXd idwt_step(const Wavelet& w, ConstRefVec approx, ConstRefVec detail);

/// Mean over channels of squared coefficients: one vector per detail scale
/// (index j-1), followed by the approximation as the last entry.
std::vector<VectorXd> multiresolution_power(const WaveletDecomposition& dec);

/// Rows = scales 1..levels then the approximation, columns = finest-scale
/// time bins; each cell holds the power of the box covering that bin.
MatrixXd multiresolution_grid(const WaveletDecomposition& dec);

/// Detail scales whose pass bands overlap [f_lo, f_hi] Hz. Scale levels+1
/// stands for the approximation band.
std::vector<int> scales_for_band(double f_lo, double f_hi, double sample_rate, int levels);

}  // namespace tmseeg

#include "tmseeg/wavelet.hpp"

#include "tmseeg/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>

namespace tmseeg {

namespace {

using cplx = std::complex<double>;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Wavelet daubechies(int n) {
  if (n < 1 || n > 20) throw ConfigError("Daubechies order must lie in [1, 20]");
  // Roots of P(y) = sum_k C(n-1+k, k) y^k.
  std::vector<cplx> y_roots;
  if (n > 1) {
    const int deg = n - 1;
    std::vector<double> c(static_cast<std::size_t>(deg + 1));
    for (int k = 0; k <= deg; ++k) c[static_cast<std::size_t>(k)] = binomial(n - 1 + k, k);
    MatrixXd companion = MatrixXd::Zero(deg, deg);
    for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i) companion(i, deg - 1) = -c[static_cast<std::size_t>(i)] / c[static_cast<std::size_t>(deg)];
    Eigen::EigenSolver<MatrixXd> es(companion, false);
    for (int i = 0; i < deg; ++i) y_roots.push_back(es.eigenvalues()(i));
  }
  // Each y root gives z^2 - (2 - 4y) z + 1 = 0; keep the root inside the unit circle.
  std::vector<cplx> poly{1.0};
  auto multiply = [&poly](cplx root) {  // poly *= (z - root)
    std::vector<cplx> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i + 1] += poly[i];
      next[i] -= root * poly[i];
    }
    poly = std::move(next);
  };
  for (const cplx& y : y_roots) {
    const cplx b = 2.0 - 4.0 * y;
    const cplx disc = std::sqrt(b * b - 4.0);
    const cplx z1 = (b + disc) / 2.0, z2 = (b - disc) / 2.0;
    multiply(std::abs(z1) < std::abs(z2) ? z1 : z2);
  }
  for (int i = 0; i < n; ++i) multiply(-1.0);

  Wavelet w;
  w.family = "db";
  w.order = n;
  const auto len = static_cast<Index>(poly.size());
  w.lowpass.resize(len);
  for (Index i = 0; i < len; ++i) w.lowpass(i) = poly[static_cast<std::size_t>(i)].real();
  w.lowpass *= std::sqrt(2.0) / w.lowpass.sum();
  w.highpass.resize(len);
  for (Index m = 0; m < len; ++m) w.highpass(m) = (m % 2 == 0 ? 1.0 : -1.0) * w.lowpass(len - 1 - m);
  return w;
}

std::string to_string(BoundaryMode m) { return m == BoundaryMode::periodic ? "periodic" : "zero_pad"; }

BoundaryMode boundary_mode_from_string(const std::string& s) {
  if (s == "periodic") return BoundaryMode::periodic;
  if (s == "zero_pad") return BoundaryMode::zero_pad;
  throw ConfigError("unknown boundary mode '" + s + "' (expected periodic|zero_pad)");
}

std::pair<double, double> WaveletDecomposition::band(int j) const {
  if (j == levels() + 1) return {0.0, sample_rate / std::ldexp(1.0, levels() + 1)};
  return {sample_rate / std::ldexp(1.0, j + 1), sample_rate / std::ldexp(1.0, j)};
}

Index WaveletDecomposition::coefficient_count() const {
  Index total = approximation.cols();
  for (const auto& d : details) total += d.cols();
  return total;
}

void dwt_step(const Wavelet& w, ConstRefVec x, VectorXd& approx, VectorXd& detail) {
  const Index n = x.size();
  const Index half = n / 2;
  const Index taps = w.lowpass.size();
  approx.setZero(half);
  detail.setZero(half);
  for (Index k = 0; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (Index m = 0; m < taps; ++m) {
      const double v = x((2 * k + m) % n);
      a += w.lowpass(m) * v;
      d += w.highpass(m) * v;
    }
    approx(k) = a;
    detail(k) = d;
  }
}

VectorXd idwt_step(const Wavelet& w, ConstRefVec approx, ConstRefVec detail) {
  const Index half = approx.size();
  const Index n = 2 * half;
  const Index taps = w.lowpass.size();
  VectorXd x = VectorXd::Zero(n);
  for (Index k = 0; k < half; ++k) {
    for (Index m = 0; m < taps; ++m) {
      x((2 * k + m) % n) += w.lowpass(m) * approx(k) + w.highpass(m) * detail(k);
    }
  }
  return x;
}

WaveletDecomposition dwt(const MatrixXd& data, double sample_rate, const Wavelet& wavelet,
                         int levels, BoundaryMode boundary) {
  const Index n = data.cols();
  if (n < 2) throw ConfigError("dwt needs at least 2 samples");
  const int max_levels = static_cast<int>(std::floor(std::log2(static_cast<double>(n))));
  if (levels < 1 || levels > max_levels)
    throw ConfigError("dwt levels must lie in [1, " + std::to_string(max_levels) + "] for " +
                      std::to_string(n) + " samples");
  if (wavelet.lowpass.size() < 2 || wavelet.lowpass.size() % 2 != 0)
    throw ConfigError("wavelet filter must have an even number of taps");

  WaveletDecomposition dec;
  dec.wavelet = wavelet;
  dec.boundary = boundary;
  dec.original_length = n;
  dec.sample_rate = sample_rate;
  dec.padded_length = boundary == BoundaryMode::periodic ? next_pow2(n) : 2 * next_pow2(n);

  const Index channels = data.rows();
  dec.details.resize(static_cast<std::size_t>(levels));
  for (int j = 1; j <= levels; ++j)
    dec.details[static_cast<std::size_t>(j - 1)].resize(channels, dec.padded_length >> j);
  dec.approximation.resize(channels, dec.padded_length >> levels);

  VectorXd current, approx, detail;
  for (Index c = 0; c < channels; ++c) {
    current = VectorXd::Zero(dec.padded_length);
    current.head(n) = data.row(c).transpose();
    for (int j = 1; j <= levels; ++j) {
      dwt_step(wavelet, current, approx, detail);
      dec.details[static_cast<std::size_t>(j - 1)].row(c) = detail.transpose();
      current = approx;
    }
    dec.approximation.row(c) = current.transpose();
  }
  return dec;
}

WaveletDecomposition dwt(const Epoch& ep, const Wavelet& wavelet, int levels, BoundaryMode boundary) {
  WaveletDecomposition dec = dwt(ep.data, ep.sample_rate, wavelet, levels, boundary);
  dec.pre_s = ep.pre_s;
  dec.post_s = ep.post_s;
  return dec;
}

MatrixXd idwt_matrix(const WaveletDecomposition& dec) {
  const Index channels = dec.n_channels();
  MatrixXd out(channels, dec.original_length);
  for (Index c = 0; c < channels; ++c) {
    VectorXd current = dec.approximation.row(c).transpose();
    for (int j = dec.levels(); j >= 1; --j) {
      const VectorXd detail = dec.details[static_cast<std::size_t>(j - 1)].row(c).transpose();
      current = idwt_step(dec.wavelet, current, detail);
    }
    out.row(c) = current.head(dec.original_length).transpose();
  }
  return out;
}

Epoch idwt(const WaveletDecomposition& dec) {
  Epoch ep;
  ep.data = idwt_matrix(dec);
  ep.sample_rate = dec.sample_rate;
  ep.pre_s = dec.pre_s;
  ep.post_s = dec.post_s;
  return ep;
}

std::vector<VectorXd> multiresolution_power(const WaveletDecomposition& dec) {
  std::vector<VectorXd> out;
  const double channels = static_cast<double>(std::max<Index>(1, dec.n_channels()));
  for (const auto& d : dec.details) out.push_back(d.cwiseAbs2().colwise().sum().transpose() / channels);
  out.push_back(dec.approximation.cwiseAbs2().colwise().sum().transpose() / channels);
  return out;
}

MatrixXd multiresolution_grid(const WaveletDecomposition& dec) {
  const auto power = multiresolution_power(dec);
  const Index bins = dec.padded_length / 2;
  MatrixXd grid(static_cast<Index>(power.size()), bins);
  for (std::size_t r = 0; r < power.size(); ++r) {
    const Index boxes = power[r].size();
    const Index span = bins / boxes;
    for (Index b = 0; b < bins; ++b) grid(static_cast<Index>(r), b) = power[r](b / span);
  }
  return grid;
}

std::vector<int> scales_for_band(double f_lo, double f_hi, double sample_rate, int levels) {
  if (!(f_lo < f_hi)) throw ConfigError("band must satisfy f_lo < f_hi");
  std::vector<int> out;
  for (int j = 1; j <= levels; ++j) {
    const double lo = sample_rate / std::ldexp(1.0, j + 1), hi = sample_rate / std::ldexp(1.0, j);
    // Overlap must exceed a quarter of the scale's band to count.
    const double overlap = std::min(hi, f_hi) - std::max(lo, f_lo);
    if (overlap > 0.25 * (hi - lo)) out.push_back(j);
  }
  const double approx_hi = sample_rate / std::ldexp(1.0, levels + 1);
  if (std::min(approx_hi, f_hi) - std::max(0.0, f_lo) > 0.25 * approx_hi) out.push_back(levels + 1);
  return out;
}

}  // namespace tmseeg

#include "tmseeg/error.hpp"
#include "tmseeg/wavelet.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace tmseeg;

namespace {

MatrixXd random_normal(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

double energy(const WaveletDecomposition& d) {
  double e = d.approximation.squaredNorm();
  for (const auto& x : d.details) e += x.squaredNorm();
  return e;
}

}  // namespace

TEST_CASE("Daubechies filters are orthonormal with N vanishing moments") {
  for (int n = 1; n <= 10; ++n) {
    const Wavelet w = daubechies(n);
    const VectorXd& h = w.lowpass;
    REQUIRE(h.size() == 2 * n);
    CHECK(h.sum() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    for (Index shift = 0; shift < h.size(); shift += 2) {
      double dot = 0;
      for (Index k = 0; k + shift < h.size(); ++k) dot += h(k) * h(k + shift);
      CHECK(dot == doctest::Approx(shift == 0 ? 1.0 : 0.0).epsilon(1e-10).scale(1.0));
    }
    for (int m = 0; m < n; ++m) {
      double moment = 0, scale = 0;
      for (Index k = 0; k < h.size(); ++k) {
        const double term = std::pow(static_cast<double>(k), m) * w.highpass(k);
        moment += term;
        scale += std::abs(term);
      }
      CHECK(std::abs(moment) <= 1e-9 * std::max(scale, 1.0));
    }
  }
}

TEST_CASE("db2 matches the closed-form taps") {
  const double s3 = std::sqrt(3.0), d = 4 * std::sqrt(2.0);
  VectorXd ref(4);
  ref << (1 + s3) / d, (3 + s3) / d, (3 - s3) / d, (1 - s3) / d;
  const VectorXd h = daubechies(2).lowpass;
  const double forward = (h - ref).cwiseAbs().maxCoeff();
  const double reversed = (h.reverse() - ref).cwiseAbs().maxCoeff();
  CHECK(std::min(forward, reversed) < 1e-12);
}

TEST_CASE("constant signal leaves no detail energy") {
  const MatrixXd x = MatrixXd::Constant(2, 1024, 3.0);
  const WaveletDecomposition dec = dwt(x, 1000, daubechies(4), 6);
  for (const auto& d : dec.details) CHECK(d.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(dec.approximation.squaredNorm() == doctest::Approx(x.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("round trip and Parseval on random signals, both boundary modes") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MatrixXd x = random_normal(3, 500 + static_cast<Index>(seed) * 37, seed);
    for (BoundaryMode mode : {BoundaryMode::periodic, BoundaryMode::zero_pad}) {
      const WaveletDecomposition dec = dwt(x, 1000, daubechies(4), 5, mode);
      CHECK(dec.coefficient_count() == dec.padded_length);
      CHECK((idwt_matrix(dec) - x).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(energy(dec) == doctest::Approx(x.squaredNorm()).epsilon(1e-9));
    }
  }
}

TEST_CASE("single level step inverts") {
  const VectorXd x = random_normal(64, 1, 4);
  VectorXd a, d;
  const Wavelet w = daubechies(3);
  dwt_step(w, x, a, d);
  CHECK((idwt_step(w, a, d) - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("10 Hz energy sits in the scales around 10 Hz") {
  MatrixXd x(1, 2048);
  for (Index i = 0; i < 2048; ++i) x(0, i) = std::sin(2 * M_PI * 10.0 * static_cast<double>(i) / 1000.0);
  const WaveletDecomposition dec = dwt(x, 1000, daubechies(4), 6);
  const auto [lo, hi] = dec.band(6);
  CHECK(lo <= 10.0);
  CHECK(hi >= 10.0);
  double total = 0, near = 0;
  for (int j = 1; j <= 6; ++j) {
    const double e = dec.details[static_cast<std::size_t>(j - 1)].squaredNorm();
    total += e;
    if (j >= 5) near += e;
  }
  CHECK(near / total >= 0.9);

  const auto power = multiresolution_power(dec);
  int best_scale = 0;
  double best = -1;
  for (int j = 1; j <= 6; ++j) {
    const double m = power[static_cast<std::size_t>(j - 1)].maxCoeff();
    if (m > best) best = m, best_scale = j;
  }
  CHECK(best_scale == 6);
  const auto scales = scales_for_band(7.5, 15.0, 1000, 6);
  CHECK(std::find(scales.begin(), scales.end(), 6) != scales.end());
}

TEST_CASE("multiresolution power definition") {
  WaveletDecomposition dec = dwt(MatrixXd::Zero(4, 256), 1000, daubechies(2), 4);
  for (const auto& p : multiresolution_power(dec)) CHECK(p.cwiseAbs().maxCoeff() == 0.0);
  dec.details[1](2, 5) = 3.0;
  const auto power = multiresolution_power(dec);
  for (std::size_t j = 0; j < power.size(); ++j) {
    for (Index b = 0; b < power[j].size(); ++b) {
      const double expected = (j == 1 && b == 5) ? 9.0 / 4.0 : 0.0;
      CHECK(power[j](b) == doctest::Approx(expected));
    }
  }
  const MatrixXd grid = multiresolution_grid(dec);
  CHECK(grid.rows() == 5);
  CHECK(grid.maxCoeff() == doctest::Approx(9.0 / 4.0));
}

TEST_CASE("too many levels is a config error") {
  CHECK_THROWS_AS(dwt(MatrixXd::Zero(1, 64), 1000, daubechies(4), 7), ConfigError);
  CHECK_THROWS_AS(daubechies(0), ConfigError);
}

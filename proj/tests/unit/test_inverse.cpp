#include "tmseeg/error.hpp"
#include "tmseeg/inverse.hpp"

#include <doctest.h>

#include <Eigen/QR>

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

GainMatrix gain_with(const MatrixXd& m, OrientationMode mode = OrientationMode::fixed) {
  const Index per = mode == OrientationMode::free ? 3 : 1;
  GainMatrix g = build_spherical_leadfield(make_cap_sensors(m.rows()),
                                           make_spherical_source_space(m.cols() / per, 0.07, mode, 3));
  g.matrix = m;
  return g;
}

NoiseCovariance cov_of(const MatrixXd& m) {
  NoiseCovariance c;
  c.matrix = m;
  return c;
}

Epoch epoch_of(const MatrixXd& data) {
  Epoch e;
  e.data = data;
  e.sample_rate = 1000.0;
  e.pre_s = 0.5 * static_cast<double>(data.cols()) / 1000.0;
  e.post_s = e.pre_s;
  return e;
}

}  // namespace

TEST_CASE("MNE identity and scalar plug-ins") {
  const GainMatrix g = gain_with(MatrixXd::Identity(4, 4));
  const InverseKernel k = mne_kernel(g, NoiseCovariance::identity(4), 0.0, 1e-6);
  CHECK((k.kernel - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(k.normalization.isOnes());

  const MatrixXd scalar = regularized_inverse(MatrixXd::Constant(1, 1, 2.0), MatrixXd::Identity(1, 1),
                                              VectorXd::Ones(1), 1.0);
  CHECK(scalar(0, 0) == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("MNE equals the Tikhonov normal-equations solution with R = C = I") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const MatrixXd gm = random_normal(8, 20, seed);
    const double lambda = 0.3 * static_cast<double>(seed);
    const InverseKernel k = mne_kernel(gain_with(gm), NoiseCovariance::identity(8), 0.0, lambda);
    const MatrixXd oracle = gm.transpose() * (gm * gm.transpose() + lambda * lambda * MatrixXd::Identity(8, 8)).inverse();
    CHECK((k.kernel - oracle).cwiseAbs().maxCoeff() <= 1e-10 * oracle.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("MNE reproduces noiseless data and is the minimum weighted norm solution") {
  const MatrixXd gm = random_normal(8, 20, 7);
  const GainMatrix g = gain_with(gm);
  const InverseKernel k = mne_kernel(g, NoiseCovariance::identity(8), 0.5, 1e-8);
  const VectorXd s = random_normal(20, 1, 8);
  const VectorXd m = gm * s;
  const VectorXd est = k.kernel * m;
  CHECK((gm * est - m).norm() / m.norm() < 1e-6);

  const VectorXd r = depth_weights(g, 0.5);
  auto weighted = [&](const VectorXd& x) { return (x.array() / r.array().sqrt()).matrix().norm(); };
  Eigen::FullPivLU<MatrixXd> lu(gm);
  const MatrixXd null = lu.kernel();
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd z = null * random_normal(null.cols(), 1, 100 + trial);
    CHECK(weighted(est) <= weighted(est + 0.1 * z) + 1e-9);
  }
}

TEST_CASE("dSPM plug-ins") {
  SUBCASE("scalar L = 2") {
    const GainMatrix g = gain_with(2.0 * MatrixXd::Identity(3, 3));
    const InverseKernel k = dspm_kernel(g, NoiseCovariance::identity(3), VectorXd::Ones(3), 1.0);
    CHECK(k.normalization(0) == doctest::Approx(0.16).epsilon(1e-12));
    CHECK((k.kernel - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("identity") {
    const GainMatrix g = gain_with(MatrixXd::Identity(3, 3));
    const InverseKernel k = dspm_kernel(g, NoiseCovariance::identity(3), VectorXd::Ones(3), 1.0);
    CHECK(k.normalization(1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK((k.kernel - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("normalization vectors are positive and reproducible") {
  const MatrixXd gm = random_normal(10, 30, 3);
  MatrixXd c = random_normal(10, 20, 4);
  c = c * c.transpose() / 20.0 + 0.1 * MatrixXd::Identity(10, 10);
  const GainMatrix g = gain_with(gm);
  const NoiseCovariance cov = cov_of(c);
  const VectorXd r = depth_weights(g, 0.5);
  const MatrixXd p = regularized_inverse(gm, c, r, 0.7);

  const InverseKernel d = dspm_kernel(g, cov, 0.5, 0.7);
  const VectorXd v = (p * c * p.transpose()).diagonal();
  CHECK((d.normalization - v).cwiseAbs().maxCoeff() <= 1e-12 * v.maxCoeff());
  CHECK((d.kernel * c * d.kernel.transpose()).diagonal().isOnes(1e-10));

  const InverseKernel s = sloreta_kernel(g, cov, 0.5, 0.7);
  const VectorXd res = (p * gm).diagonal();
  CHECK((s.normalization - res).cwiseAbs().maxCoeff() <= 1e-12 * res.maxCoeff());
  CHECK((s.normalization.array() > 0).all());
  CHECK((d.normalization.array() > 0).all());
}

TEST_CASE("free orientations normalize over each 3x3 block") {
  const MatrixXd gm = random_normal(12, 15, 5);
  const GainMatrix g = gain_with(gm, OrientationMode::free);
  const InverseKernel d = dspm_kernel(g, NoiseCovariance::identity(12), 0.5, 0.5);
  CHECK(d.normalization.size() == 5);
  const MatrixXd out = d.kernel * d.kernel.transpose();
  for (Index p = 0; p < 5; ++p) CHECK(out.block(3 * p, 3 * p, 3, 3).trace() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("sLORETA power and identity limit") {
  CHECK(sloreta_power(2.0, 4.0) == 1.0);
  const GainMatrix g = gain_with(MatrixXd::Identity(5, 5));
  const NoiseCovariance cov = NoiseCovariance::identity(5, 1e-6);
  const InverseKernel s = sloreta_kernel(g, cov, 0.0, 1e-4);
  const InverseKernel m = mne_kernel(g, cov, 0.0, 1e-4);
  CHECK((s.normalization.array() - 1.0).abs().maxCoeff() < 1e-6);
  CHECK((s.kernel - m.kernel).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("apply_kernel") {
  const MatrixXd gm = random_normal(6, 9, 11);
  const InverseKernel k = mne_kernel(gain_with(gm), NoiseCovariance::identity(6), 0.5, 0.4);
  SUBCASE("zero epoch") {
    CHECK(apply_kernel(k, epoch_of(MatrixXd::Zero(6, 10))).values.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identity kernel") {
    InverseKernel id = k;
    id.kernel = MatrixXd::Identity(6, 6);
    id.normalization = VectorXd::Ones(6);
    const MatrixXd data = random_normal(6, 10, 12);
    CHECK(apply_kernel(id, epoch_of(data)).values == data);
  }
  SUBCASE("linearity") {
    const MatrixXd e1 = random_normal(6, 10, 13), e2 = random_normal(6, 10, 14);
    const MatrixXd lhs = apply_kernel(k, epoch_of(1.5 * e1 - 0.25 * e2)).values;
    const MatrixXd rhs = 1.5 * apply_kernel(k, epoch_of(e1)).values - 0.25 * apply_kernel(k, epoch_of(e2)).values;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * rhs.cwiseAbs().maxCoeff());
  }
  SUBCASE("sLORETA power is nonnegative") {
    const InverseKernel s = sloreta_kernel(gain_with(gm), NoiseCovariance::identity(6), 0.5, 0.4);
    CHECK((apply_kernel(s, epoch_of(random_normal(6, 10, 15)), ApplyMode::power).values.array() >= 0).all());
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(apply_kernel(k, epoch_of(MatrixXd::Zero(5, 10))), DimensionError); }
}

TEST_CASE("scaling data scales MNE and keeps dSPM/sLORETA argmax") {
  const MatrixXd gm = random_normal(8, 16, 21);
  const GainMatrix g = gain_with(gm);
  const NoiseCovariance cov = NoiseCovariance::identity(8);
  const VectorXd m = gm.col(5) + 0.1 * random_normal(8, 1, 22);
  const InverseKernel mne = mne_kernel(g, cov, 0.5, 0.3);
  CHECK((mne.kernel * (3.0 * m) - 3.0 * (mne.kernel * m)).norm() <= 1e-12 * (mne.kernel * m).norm() * 3);
  for (const InverseKernel& k : {dspm_kernel(g, cov, 0.5, 0.3), sloreta_kernel(g, cov, 0.5, 0.3)}) {
    Index a = 0, b = 0;
    (k.kernel * m).cwiseAbs().maxCoeff(&a);
    (k.kernel * (42.0 * m)).cwiseAbs().maxCoeff(&b);
    CHECK(a == b);
  }
}

TEST_CASE("lambda from snr") {
  const MatrixXd gm = random_normal(6, 12, 31);
  const GainMatrix g = gain_with(gm);
  const NoiseCovariance cov = NoiseCovariance::identity(6, 2.0);
  const VectorXd r = depth_weights(g, 0.5);
  const double expected = std::sqrt((gm * r.asDiagonal() * gm.transpose()).trace() / (9.0 * 12.0));
  CHECK(lambda_from_snr(g, cov, 0.5, 3.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("errors") {
  const MatrixXd rank_one = MatrixXd::Ones(4, 6);
  CHECK_THROWS_AS(mne_kernel(gain_with(rank_one), NoiseCovariance::identity(4), 0.0, 1e-9), ConditioningError);
  CHECK_THROWS_AS(method_from_string("beamformer"), ConfigError);
  try {
    method_from_string("beamformer");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    for (const char* name : {"mne", "dspm", "sloreta", "wmem"}) CHECK(what.find(name) != std::string::npos);
  }
  for (Method m : {Method::mne, Method::dspm, Method::sloreta, Method::wmem}) CHECK(method_from_string(to_string(m)) == m);
}

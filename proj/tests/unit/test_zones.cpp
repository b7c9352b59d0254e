#include "tmseeg/error.hpp"
#include "tmseeg/zones.hpp"

#include <doctest.h>

#include <random>

using namespace tmseeg;

namespace {

SourceEstimate constant_estimate(const VectorXd& level, Index n = 201) {
  SourceEstimate est;
  est.values = level.replicate(1, n);
  est.sample_rate = 1000.0;
  est.t0_index = 100;
  return est;
}

double inertia_of(const MatrixXd& x, const KMeansResult& r) {
  double s = 0;
  for (Index i = 0; i < x.rows(); ++i)
    s += (x.row(i) - r.centroids.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

}  // namespace

TEST_CASE("k-means basics") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0, 1);
  MatrixXd x(40, 2);
  for (Index i = 0; i < x.rows(); ++i) x.row(i) << d(rng), d(rng);
  SUBCASE("k = 1 gives the mean") {
    const auto r = kmeans(x, 1, 0);
    CHECK((r.centroids.row(0) - x.colwise().mean()).norm() < 1e-12);
    CHECK(r.inertia == doctest::Approx(inertia_of(x, r)));
  }
  SUBCASE("inertia never increases") {
    const auto r = kmeans(x, 4, 11);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-12);
    CHECK(r.inertia == doctest::Approx(inertia_of(x, r)));
  }
  SUBCASE("determinism") {
    const auto a = kmeans(x, 3, 5), b = kmeans(x, 3, 5);
    CHECK(a.labels == b.labels);
    CHECK(a.centroids == b.centroids);
  }
  SUBCASE("bad k") {
    CHECK_THROWS(kmeans(x, 0, 0));
    CHECK_THROWS(kmeans(x, 41, 0));
  }
}

TEST_CASE("k-means separates two blobs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> d(0, 0.1);
    MatrixXd x(60, 2);
    for (Index i = 0; i < 60; ++i) x.row(i) << d(rng) + (i < 30 ? 0.0 : 5.0), d(rng);
    const auto r = kmeans(x, 2, seed);
    for (Index i = 1; i < 60; ++i)
      CHECK((r.labels[static_cast<std::size_t>(i)] == r.labels[0]) == (i < 30));
  }
}

TEST_CASE("active zone detection") {
  SUBCASE("one active source among 200") {
    VectorXd level = VectorXd::Zero(200);
    level(17) = 3.0;
    const auto z = detect_active_zones(constant_estimate(level), -0.01, 0.01, 2, 0);
    CHECK(z.active_count() == 1);
    CHECK(z.active[17]);
    CHECK(z.detection_rate == doctest::Approx(0.005));
  }
  SUBCASE("all equal is degenerate") {
    CHECK_THROWS_AS(detect_active_zones(constant_estimate(VectorXd::Constant(50, 2.0)), -0.01, 0.01), DegenerateError);
    CHECK_THROWS_AS(detect_active_zones(constant_estimate(VectorXd::Zero(50)), -0.01, 0.01), DegenerateError);
  }
  SUBCASE("scale invariant") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    VectorXd level(120);
    for (Index i = 0; i < level.size(); ++i) level(i) = u(rng) * u(rng);
    const auto a = detect_active_zones(constant_estimate(level), -0.02, 0.02, 3, 4);
    const auto b = detect_active_zones(constant_estimate(1e-9 * level), -0.02, 0.02, 3, 4);
    CHECK(a.active == b.active);
    CHECK(a.detection_rate == b.detection_rate);
  }
  SUBCASE("window checks") {
    const auto est = constant_estimate(VectorXd::LinSpaced(10, 0, 1));
    CHECK_THROWS_AS(detect_active_zones(est, 0.01, -0.01), ConfigError);
    CHECK_THROWS_AS(detect_active_zones(est, -0.5, 0.01), RangeError);
  }
}

TEST_CASE("Jaccard index") {
  CHECK(jaccard({true, false, true}, {true, false, true}) == 1.0);
  CHECK(jaccard({true, false}, {false, true}) == 0.0);
  CHECK(jaccard({true, true, false}, {true, false, false}) == 0.5);
  CHECK(jaccard({false, false}, {false, false}) == 1.0);
  CHECK_THROWS_AS(jaccard({true}, {true, false}), DimensionError);
}

TEST_CASE("method comparison") {
  VectorXd level = VectorXd::LinSpaced(60, 0, 1).array().pow(4);
  std::map<std::string, SourceEstimate> est{{"A", constant_estimate(level)}, {"B", constant_estimate(level)}};
  const std::vector<ZoneWindow> windows{{"w", -0.01, 0.01}};
  const auto cmp = compare_methods(est, windows, 3, 0);
  CHECK(cmp.rows.size() == 2);
  REQUIRE(cmp.overlaps.size() == 1);
  CHECK(cmp.overlaps[0].jaccard == 1.0);
  const std::string table = cmp.to_table();
  CHECK(table.find('%') != std::string::npos);
  CHECK(table.find("A") != std::string::npos);
  CHECK(cmp.to_csv().rfind("kind,window,method", 0) == 0);
}

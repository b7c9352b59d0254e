#include "tmseeg/error.hpp"
#include "tmseeg/headmodel.hpp"
#include "tmseeg/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

using namespace tmseeg;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tmseeg_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

MatrixXd random_matrix(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1e-6);
  MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = d(rng);
  return m;
}

void expect_io_error_naming(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(needle) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("csv parsing") {
  const MatrixXd m = random_matrix(3, 4, 1);
  CHECK(parse_matrix_csv(matrix_csv(m)) == m);
  const MatrixXd small = parse_matrix_csv("1,2\n3,4\n");
  CHECK(small(1, 0) == 3.0);
  CHECK(parse_matrix_csv("1,2\r\n3,4").rows() == 2);
  CHECK_THROWS_AS(parse_matrix_csv("1,2\n3\n"), IoError);
  CHECK_THROWS_AS(parse_matrix_csv("1,x\n"), IoError);
}

TEST_CASE("artifact round trips") {
  TempDir tmp;
  SUBCASE("gain") {
    const GainMatrix g = build_spherical_leadfield(make_cap_sensors(16), make_spherical_source_space(20));
    save_gain(tmp.path / "gain", g, "h1");
    std::string hash;
    const GainMatrix back = load_gain(tmp.path / "gain", &hash);
    CHECK(hash == "h1");
    CHECK(back.matrix == g.matrix);
    CHECK(back.n_sources() == g.n_sources());
    CHECK(back.sources.positions[3] == g.sources.positions[3]);
    CHECK(back.sensors.labels == g.sensors.labels);
  }
  SUBCASE("recording") {
    Recording rec;
    rec.data = random_matrix(4, 50, 2);
    rec.sample_rate = 500.0;
    rec.t0_index = 10;
    save_recording(tmp.path / "rec", rec, {"a", "b", "c", "d"}, "h2");
    const Recording back = load_recording(tmp.path / "rec");
    CHECK(back.data == rec.data);
    CHECK(back.sample_rate == 500.0);
    CHECK(back.t0_index == 10);
  }
  SUBCASE("epoch") {
    Epoch ep;
    ep.data = random_matrix(3, 30, 3);
    ep.sample_rate = 10.0;
    ep.pre_s = 1.0;
    ep.post_s = 2.0;
    save_epoch(tmp.path / "ep", ep, "h3");
    const Epoch back = load_epoch(tmp.path / "ep");
    CHECK(back.data == ep.data);
    CHECK(back.t0_index() == ep.t0_index());
  }
  SUBCASE("covariance") {
    const MatrixXd a = random_matrix(5, 5, 4);
    NoiseCovariance cov;
    cov.matrix = a * a.transpose() + 1e-12 * MatrixXd::Identity(5, 5);
    cov.n_samples_used = 77;
    save_covariance(tmp.path / "cov", cov, "h4");
    const NoiseCovariance back = load_covariance(tmp.path / "cov");
    CHECK(back.matrix == cov.matrix);
    CHECK(back.n_samples_used == 77);
  }
  SUBCASE("estimate") {
    SourceEstimate est;
    est.values = random_matrix(6, 20, 5);
    est.sample_rate = 250.0;
    est.t0_index = 4;
    est.method = Method::sloreta;
    save_estimate(tmp.path / "est", est, "h5");
    std::string hash;
    const SourceEstimate back = load_estimate(tmp.path / "est", &hash);
    CHECK(hash == "h5");
    CHECK(back.values == est.values);
    CHECK(back.method == Method::sloreta);
    CHECK(back.t0_index == 4);
  }
}

TEST_CASE("corrupt and missing artifacts") {
  TempDir tmp;
  Epoch ep;
  ep.data = random_matrix(2, 10, 6);
  ep.sample_rate = 10.0;
  ep.pre_s = 0.5;
  ep.post_s = 0.5;
  save_epoch(tmp.path / "ep", ep, "h");

  SUBCASE("data edited after writing") {
    MatrixXd edited = ep.data;
    edited(0, 0) += 1.0;
    write_matrix_csv(tmp.path / "ep.csv", edited);
    expect_io_error_naming([&] { load_epoch(tmp.path / "ep"); }, "ep.csv");
  }
  SUBCASE("wrong kind") {
    expect_io_error_naming([&] { load_covariance(tmp.path / "ep"); }, "ep.json");
  }
  SUBCASE("missing file names the path") {
    expect_io_error_naming([&] { load_epoch(tmp.path / "absent"); }, "absent");
  }
  SUBCASE("invalid json") {
    write_text(tmp.path / "ep.json", "{not json");
    expect_io_error_naming([&] { load_epoch(tmp.path / "ep"); }, "ep.json");
  }
}

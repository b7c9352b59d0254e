#include "tmseeg/error.hpp"
#include "tmseeg/log.hpp"
#include "tmseeg/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace tmseeg;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tmseeg_pipe_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string config_error_of(const Json& j) {
  try {
    PipelineConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing") {
  const PipelineConfig defaults;
  SUBCASE("round trip keeps the hash") {
    const PipelineConfig back = PipelineConfig::from_json(defaults.to_json());
    CHECK(back.hash() == defaults.hash());
    CHECK(back.to_json() == defaults.to_json());
    CHECK(PipelineConfig::from_json(Json::object()).hash() == defaults.hash());
  }
  SUBCASE("hash tracks content") {
    PipelineConfig other;
    other.seed = 8;
    CHECK(other.hash() != defaults.hash());
    CHECK(defaults.hash() == PipelineConfig{}.hash());
  }
  SUBCASE("unknown field names its path") {
    const std::string msg = config_error_of(Json{{"geometry", {{"n_source", 10}}}});
    CHECK(msg.find("geometry.n_source") != std::string::npos);
  }
  SUBCASE("wrong type names its path") {
    const std::string msg = config_error_of(Json{{"connectivity", {{"threshold", "high"}}}});
    CHECK(msg.find("connectivity.threshold") != std::string::npos);
  }
  SUBCASE("unknown method") {
    CHECK(config_error_of(Json{{"inverse", {{"methods", {"mne", "beamformer"}}}}}).find("beamformer") !=
          std::string::npos);
  }
  SUBCASE("cross-field validation") {
    PipelineConfig c;
    c.connectivity.threshold = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PipelineConfig{};
    c.preprocess.baseline_end_s = -2.5;
    CHECK_THROWS(c.validate());
    c = PipelineConfig{};
    c.geometry.n_sources = 0;
    CHECK_THROWS(c.validate());
    CHECK_NOTHROW(PipelineConfig{}.validate());
  }
}

TEST_CASE("silent scenario simulates zeros") {
  PipelineConfig cfg;
  cfg.geometry.n_sources = 40;
  cfg.simulation.scenario = "none";
  cfg.simulation.noise_std = 0.0;
  cfg.simulation.tms_artifact = false;
  cfg.simulation.duration_s = 1.0;
  cfg.simulation.pulse_time_s = 0.5;
  const GainMatrix gain = build_gain(cfg);
  const Recording rec = simulate(cfg, gain);
  CHECK(rec.data.cwiseAbs().maxCoeff() == 0.0);
  CHECK(rec.n_channels() == cfg.geometry.n_sensors);
  CHECK(rec.n_samples() == 1000);
}

TEST_CASE("comparison of an estimate with itself") {
  set_warning_sink([](const std::string&) {});
  PipelineConfig cfg;
  const GainMatrix gain = build_gain(cfg);
  const Epoch ep = preprocess(cfg, simulate(cfg, gain));
  const SourceEstimate est = localize(cfg, gain, ep, Method::mne).estimate;
  TempDir tmp;
  const Json summary = compare_estimates(cfg, gain, {{"MNE", est}, {"MNE", est}}, tmp.path);

  for (const auto& o : summary["zone_overlaps"]) CHECK(o["jaccard"].get<double>() == 1.0);
  const auto& inter = summary["kansky"]["inter"];
  CHECK(inter.size() == 2);
  CHECK(inter["MNE"] == inter["MNE#2"]);

  std::istringstream csv(read_text(tmp.path / "kansky.csv"));
  std::string line;
  int rows = 0, inter_rows = 0;
  std::getline(csv, line);
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    ++rows;
    inter_rows += line.rfind("inter,", 0) == 0;
  }
  CHECK(rows == 8);
  CHECK(inter_rows == 4);
  CHECK(fs::exists(tmp.path / "kansky_inter.txt"));
  CHECK(fs::exists(tmp.path / "zones.txt"));
  CHECK_THROWS(compare_estimates(cfg, gain, {{"MNE", est}}, tmp.path));
  set_warning_sink(nullptr);
}

TEST_CASE("stages reject inputs from another config") {
  PipelineConfig cfg;
  cfg.geometry.n_sources = 40;
  cfg.simulation.scenario = "none";
  TempDir tmp;
  run_simulate(cfg, tmp.path);
  CHECK(fs::exists(tmp.path / "recording.csv"));
  PipelineConfig other = cfg;
  other.seed = cfg.seed + 1;
  try {
    run_preprocess(other, tmp.path);
    FAIL("expected a hash mismatch");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(cfg.hash()) != std::string::npos);
  }
  CHECK_NOTHROW(run_preprocess(cfg, tmp.path));
  CHECK(fs::exists(tmp.path / "epoch.csv"));
}

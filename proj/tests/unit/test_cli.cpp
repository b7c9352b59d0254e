#include "tmseeg/io.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

using namespace tmseeg;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tmseeg_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// Runs the CLI with `args`, sending both streams to `log`; returns the exit code.
int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + TMSEEG_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string small_config(const fs::path& dir) {
  const fs::path p = dir / "small.json";
  write_text(p, R"({"geometry": {"n_sources": 40}, "simulation": {"scenario": "none"}})");
  return p.string();
}

}  // namespace

TEST_CASE("cli exit codes") {
  TempDir tmp;
  const fs::path log = tmp.path / "log.txt";
  CHECK(run("--help", log) == 0);
  CHECK(run("", log) == 2);
  CHECK(run("frobnicate", log) == 2);

  CHECK(run("-d \"" + tmp.path.string() + "/x\" localize -m beamformer", log) == 2);
  const std::string msg = read_text(log);
  for (const char* name : {"mne", "dspm", "sloreta", "wmem"}) CHECK(msg.find(name) != std::string::npos);

  write_text(tmp.path / "bad.json", R"({"geometry": {"bogus": 1}})");
  CHECK(run("-c \"" + (tmp.path / "bad.json").string() + "\" simulate", log) == 2);
  CHECK(read_text(log).find("bogus") != std::string::npos);

  CHECK(run("-c \"" + (tmp.path / "absent.json").string() + "\" simulate", log) == 4);
  CHECK(run("-d \"" + (tmp.path / "empty").string() + "\" preprocess", log) == 4);
  CHECK(read_text(log).find("empty") != std::string::npos);
}

TEST_CASE("cli stages are deterministic") {
  TempDir tmp;
  const fs::path log = tmp.path / "log.txt";
  const std::string cfg = small_config(tmp.path);
  for (const char* d : {"a", "b"}) {
    const std::string dir = "\"" + (tmp.path / d).string() + "\"";
    REQUIRE(run("-c \"" + cfg + "\" -d " + dir + " simulate", log) == 0);
    REQUIRE(run("-c \"" + cfg + "\" -d " + dir + " preprocess", log) == 0);
  }
  for (const char* f : {"recording.csv", "recording.json", "epoch.csv", "noise_cov.csv"})
    CHECK(read_text(tmp.path / "a" / f) == read_text(tmp.path / "b" / f));

  const std::string dir = "\"" + (tmp.path / "a").string() + "\"";
  CHECK(run("-c \"" + cfg + "\" --seed 99 -d " + dir + " preprocess", log) == 2);
}

#include "tmseeg/error.hpp"
#include "tmseeg/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

int exit_code(tmseeg::ErrorKind kind) {
  switch (kind) {
    case tmseeg::ErrorKind::config: return 2;
    case tmseeg::ErrorKind::numerical: return 3;
    case tmseeg::ErrorKind::io: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace tmseeg;
  CLI::App app{"TMS-EEG source localization and connectivity comparison"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string dir = "run";
  std::optional<std::uint64_t> seed;
  app.add_option("-c,--config", config_path, "JSON config (defaults when omitted)");
  app.add_option("-d,--dir", dir, "working directory for artifacts")->capture_default_str();
  app.add_option("--seed", seed, "override the config seed");

  auto* simulate = app.add_subcommand("simulate", "build the head model and simulate a recording");
  auto* preprocess = app.add_subcommand("preprocess", "artifact removal, filtering, epoching, noise covariance");
  auto* localize = app.add_subcommand("localize", "source estimate for one method");
  std::string method_name;
  std::string epoch_stem;
  localize->add_option("-m,--method", method_name, "mne | dspm | sloreta | wmem")->required();
  localize->add_option("--epoch", epoch_stem, "epoch stem (default <dir>/epoch)");
  auto* scouts = app.add_subcommand("scouts", "place scouts and extract their time courses");
  scouts->add_option("-m,--method", method_name, "mne | dspm | sloreta | wmem")->required();
  auto* connectivity = app.add_subcommand("connectivity", "scout graphs and Kansky indices before/after the pulse");
  connectivity->add_option("-m,--method", method_name, "mne | dspm | sloreta | wmem")->required();
  auto* zones = app.add_subcommand("zones", "k-means active-zone detection");
  zones->add_option("-m,--method", method_name, "mne | dspm | sloreta | wmem")->required();
  auto* compare = app.add_subcommand("compare", "comparison report from two or more estimates");
  std::vector<std::string> estimate_stems;
  compare->add_option("estimates", estimate_stems, "estimate stems (default: every configured method in <dir>)");
  auto* report = app.add_subcommand("report", "simulate -> preprocess -> localize (all methods) -> compare");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    const fs::path d = dir;
    const auto method = [&] { return method_from_string(method_name); };

    if (simulate->parsed()) {
      run_simulate(cfg, d);
    } else if (preprocess->parsed()) {
      run_preprocess(cfg, d);
    } else if (localize->parsed()) {
      const Method m = method();
      std::optional<fs::path> stem;
      if (!epoch_stem.empty()) stem = fs::path(epoch_stem);
      run_localize(cfg, d, m, stem);
    } else if (scouts->parsed()) {
      run_scouts(cfg, d, method());
    } else if (connectivity->parsed()) {
      run_connectivity(cfg, d, method());
    } else if (zones->parsed()) {
      run_zones(cfg, d, method());
    } else if (compare->parsed()) {
      run_compare(cfg, d, std::vector<fs::path>(estimate_stems.begin(), estimate_stems.end()));
    } else if (report->parsed()) {
      run_report(cfg, d);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}

// Command-line front end: run, diagnose, oracles, sweep, multiseed.

#include <sys/resource.h>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "magr/error.hpp"
#include "magr/log.hpp"
#include "magr/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "TOML-style config file");
  sub->add_option("--set", c.overrides, "Override a config key (section.key=value)")
      ->allow_extra_args(false);
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--seed", c.seed, "Training seed");
  sub->add_flag("--quiet", c.quiet, "Only errors on stderr");
  sub->add_flag("--verbose", c.verbose, "Per-epoch progress on stderr");
}

magr::RunConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.overrides;
  if (c.seed) overrides.push_back("train.seed=" + std::to_string(*c.seed));
  std::optional<std::filesystem::path> path;
  if (c.config) path = *c.config;
  return magr::load_run_config(path, overrides);
}

void resource_line(std::chrono::steady_clock::time_point start) {
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  magr::log::info("wall ", secs, " s, peak rss ", usage.ru_maxrss / 1024, " MiB");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based refinement of paired multimodal node embeddings"};
  app.require_subcommand(1);
  Common common;
  auto* run = app.add_subcommand("run", "Train and report test retrieval");
  auto* diagnose = app.add_subcommand("diagnose", "Neighborhood and depth diagnostics");
  auto* oracles = app.add_subcommand("oracles", "Smoothing-dynamics property checks");
  auto* sweep = app.add_subcommand("sweep", "Experiments over a depth, alpha or beta grid");
  auto* multiseed = app.add_subcommand("multiseed", "Experiments over several training seeds");
  for (auto* sub : {run, diagnose, oracles, sweep, multiseed}) add_common(sub, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  namespace log = magr::log;
  log::threshold() = common.quiet     ? log::Level::Quiet
                     : common.verbose ? log::Level::Debug
                                      : log::Level::Info;
  const auto start = std::chrono::steady_clock::now();
  try {
    const magr::RunConfig cfg = resolve(common);
    const std::filesystem::path out = common.out;
    std::filesystem::create_directories(out);
    if (run->parsed()) {
      const auto r = magr::run_experiment(cfg);
      magr::write_experiment(r, cfg, out);
      log::info("test R@1 ", r.test.avg.r1, " R@10 ", r.test.avg.r10, " MRR ", r.test.avg.mrr,
                " (", cfg.protocol(), ")");
    } else if (diagnose->parsed()) {
      magr::run_diagnostics(cfg, out);
    } else if (oracles->parsed()) {
      const auto report = magr::run_oracles(cfg);
      magr::write_json(report, out / "oracles.json");
      log::info("oracles ", report.at("pass").get<bool>() ? "passed" : "FAILED");
      resource_line(start);
      return report.at("pass").get<bool>() ? kExitOk : kExitRuntime;
    } else if (sweep->parsed()) {
      magr::write_json(magr::run_sweep(cfg), out / "sweep.json");
    } else if (multiseed->parsed()) {
      const auto summary = magr::run_multiseed(cfg);
      nlohmann::json j = magr::to_json(summary);
      j["schema_version"] = magr::kSchemaVersion;
      j["config"] = magr::to_config_text(cfg);
      magr::write_json(j, out / "multiseed.json");
    }
    resource_line(start);
    return kExitOk;
  } catch (const magr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == magr::ErrorKind::Config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

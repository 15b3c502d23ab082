#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "magr/config.hpp"
#include "magr/error.hpp"

using namespace magr;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "magr_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const auto p = kRoot / name;
  std::ofstream(p, std::ios::trunc) << text;
  return p;
}

int magr_cli(const std::string& args) {
  const std::string cmd = std::string(MAGR_CLI_PATH) + " " + args + " --quiet 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmall = R"(# small synthetic run
[synthetic]
num_nodes = 120
num_classes = 4
dim = 16
[model]
dim = 16
scorer_hidden = 8
[readout]
width = 4
[smoothing]
depth = 2
[train]
epochs = 3
warmup_epochs = 1
)";

}  // namespace

TEST_CASE("config text parses values and comments") {
  const auto t = ConfigTable::parse("# c\n[a]\nx = 1.5 # tail\ny = \"s\"\nz = [1, 2]\nw = true\n");
  CHECK(t.entries().at("a.x") == "1.5");
  CHECK(t.entries().at("a.y") == "\"s\"");
  CHECK(t.has("a.z"));
  CHECK(t.has("a.w"));
}

TEST_CASE("resolved config round-trips") {
  auto t = ConfigTable::parse(kSmall);
  t.set("smoothing.alpha=0.25");
  t.set("control.randomize_edges=\"degree\"");
  const auto cfg = run_config_from(t);
  CHECK(cfg.model.smoothing.alpha == 0.25);
  CHECK(cfg.data.synthetic.num_nodes == 120);
  const std::string text = to_config_text(cfg);
  const auto again = run_config_from(ConfigTable::parse(text));
  CHECK(to_config_text(again) == text);
}

TEST_CASE("config errors name the key") {
  try {
    run_config_from(ConfigTable::parse("[smoothing]\ndepht = 3\n"));
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("smoothing.depht") != std::string::npos);
  }
  CHECK_THROWS_AS(run_config_from(ConfigTable::parse("[smoothing]\nalpha = 1.5\n")), Error);
  CHECK_THROWS_AS(run_config_from(ConfigTable::parse("[train]\nlr = abc\n")), Error);
  CHECK_THROWS_AS(run_config_from(ConfigTable::parse(
                      "[control]\nallow_self_pairs = true\nonly_self_pairs = true\n")),
                  Error);
}

TEST_CASE("self-pair controls change the protocol label") {
  auto cfg = run_config_from(ConfigTable::parse(kSmall));
  CHECK(cfg.protocol() == "in-protocol");
  cfg.control.only_self_pairs = true;
  CHECK(cfg.protocol() == "control-only");
}

TEST_CASE("CLI exit codes") {
  const auto bad = write_file("bad.toml", "[smoothing]\nnope = 1\n");
  CHECK(magr_cli("run --config " + bad.string() + " --out " + (kRoot / "bad").string()) == 2);
  CHECK(magr_cli("run --config " + (kRoot / "missing.toml").string()) == 2);
  CHECK(magr_cli("frobnicate") == 2);
  CHECK(magr_cli("--help >/dev/null") == 0);
}

TEST_CASE("zero epochs writes a complete report") {
  const auto cfg = write_file("small.toml", kSmall);
  const auto out = kRoot / "zero";
  fs::remove_all(out);
  REQUIRE(magr_cli("run --config " + cfg.string() + " --set train.epochs=0 --set "
                   "train.warmup_epochs=0 --out " + out.string()) == 0);
  const auto j = nlohmann::json::parse(slurp(out / "results.json"));
  CHECK(j["training"]["epochs_run"] == 0);
  CHECK(j["protocol"] == "in-protocol");
  CHECK(j["test"]["avg"].contains("R@1"));
  CHECK(fs::exists(out / "config.resolved.toml"));
  CHECK(fs::exists(out / "checkpoint" / "manifest.json"));
}

TEST_CASE("identical configs give byte-identical results") {
  const auto cfg = write_file("small.toml", kSmall);
  const auto a = kRoot / "det_a", b = kRoot / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  REQUIRE(magr_cli("run --config " + cfg.string() + " --out " + a.string()) == 0);
  REQUIRE(magr_cli("run --config " + cfg.string() + " --out " + b.string()) == 0);
  CHECK(slurp(a / "results.json") == slurp(b / "results.json"));
  CHECK(slurp(a / "epochs.jsonl") == slurp(b / "epochs.jsonl"));
}

TEST_CASE("diagnostics sections") {
  const auto cfg = write_file("small.toml", kSmall);
  const auto out = kRoot / "diag";
  fs::remove_all(out);
  REQUIRE(magr_cli("diagnose --config " + cfg.string() + " --set diagnose.depths=[0,1,2] --out " +
                   out.string()) == 0);
  const auto j = nlohmann::json::parse(slurp(out / "diagnostics.json"));
  for (const char* key : {"knn_overlap", "purity", "depth_sweep", "hard_queries"})
    CHECK(j.contains(key));
  CHECK(j["purity"]["available"] == true);
  CHECK(fs::exists(out / "depth_sweep.csv"));
}

TEST_CASE("diagnostics without categories mark purity unavailable") {
  fs::create_directories(kRoot);
  write_file("fv.csv", "1,0\n0,1\n1,1\n0.5,1\n");
  write_file("ft.csv", "1,0.1\n0.1,1\n1,0.9\n0.4,1\n");
  write_file("edges.txt", "0 1\n1 2\n2 3\n");
  const auto cfg = write_file(
      "files.toml", "[data]\nsource = \"files\"\nfeatures_v = \"" + (kRoot / "fv.csv").string() +
                        "\"\nfeatures_t = \"" + (kRoot / "ft.csv").string() + "\"\nedges = \"" +
                        (kRoot / "edges.txt").string() +
                        "\"\n[diagnose]\nk = 2\ndepths = [0, 1]\n");
  const auto out = kRoot / "diag_files";
  fs::remove_all(out);
  REQUIRE(magr_cli("diagnose --config " + cfg.string() + " --out " + out.string()) == 0);
  const auto j = nlohmann::json::parse(slurp(out / "diagnostics.json"));
  CHECK(j["purity"]["available"] == false);
  CHECK(j.contains("knn_overlap"));
}

TEST_CASE("oracles pass including full restart") {
  const auto out = kRoot / "oracles";
  fs::remove_all(out);
  REQUIRE(magr_cli("oracles --set oracles.trials=3 --set oracles.nodes=12 --out " +
                   out.string()) == 0);
  const auto j = nlohmann::json::parse(slurp(out / "oracles.json"));
  CHECK(j["pass"] == true);
  bool saw_full_restart = false;
  for (const auto& r : j["restart_convergence"]) {
    if (r["alpha"] == 1.0) {
      saw_full_restart = true;
      CHECK(r["expected_rate"] == 0.0);
      CHECK(r["converged"] == true);
    }
  }
  CHECK(saw_full_restart);
}

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "splitrank/error.hpp"
#include "splitrank/pipeline.hpp"
#include "splitrank/report.hpp"

using namespace splitrank;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "seed": 4,
  "sim": {"n": 1500, "k": 6},
  "sensitivity": {"runs": 1, "bootstrap_resamples": 20},
  "validation": {"campaign_n": 4000}
})";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("splitrank_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config: empty object gives the simulation study") {
  const auto c = parse_run_config("{}");
  CHECK(c.master_seed == 0);
  CHECK(c.sim.n == 10000);
  CHECK(c.sim.k == 50);
  REQUIRE(c.models.size() == 2);
  CHECK(c.models[0].name == "IPTW-LR");
  CHECK(c.models[1].family == Family::svr_linear);
  CHECK(c.analysis.trim_lo == 0.01);
  CHECK(c.analysis.trim_hi == 0.99);
  CHECK(c.sensitivity.runs == 5);
  CHECK(c.sensitivity.configs.size() == 3);
  CHECK(c.k_grid.size() == 9);
  CHECK(parse_run_config("").models.size() == 2);
}

TEST_CASE("config: errors") {
  CHECK_THROWS_AS(parse_run_config(R"({"models": []})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"models": null})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"modles": []})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sensitivity": {"runz": 2}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"models": [{"name": "x"}]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sensitivity": {"configs": [{"mode": "literal"}]}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"trim_quantiles": [0.9, 0.1]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"k_grid": [0]})"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config: seeds, aliases and hashing") {
  const auto c = parse_run_config(R"({"seed": 9, "trim_quantiles": [0.05, 0.95]})");
  CHECK(c.master_seed == 9);
  CHECK(c.sim.seed == 9);
  CHECK(c.analysis.trim_lo == 0.05);
  const auto explicit_sim = parse_run_config(R"({"seed": 9, "sim": {"seed": 2}})");
  CHECK(explicit_sim.sim.seed == 2);

  auto a = parse_run_config("{}");
  auto b = a;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.set_seed(1);
  CHECK(config_hash(a) != config_hash(b));

  // The JSON echo reloads to the same config.
  const nlohmann::json j = a;
  CHECK(config_hash(j.get<RunConfig>()) == config_hash(a));
}

TEST_CASE("pipeline: small run is deterministic and emits every output") {
  const auto cfg = parse_run_config(kSmall);
  const auto r1 = run_pipeline(cfg);
  CHECK_FALSE(r1.any_failure());
  REQUIRE(r1.models.size() == 2);
  for (const auto& m : r1.models) {
    CHECK(m.ok());
    CHECK(m.rank_rmse.has_value());
    CHECK(m.placebo.has_value());
    CHECK(m.confounding.size() == 3);
    REQUIRE(m.validation.has_value());
  }
  CHECK(r1.n_retained < r1.n_units);
  CHECK(r1.config_hash == config_hash(cfg));

  const auto d1 = scratch("run1"), d2 = scratch("run2");
  const auto m1 = emit_report(r1, d1);
  const auto m2 = emit_report(run_pipeline(cfg), d2);
  CHECK(m1.files.size() == 7);
  REQUIRE(m1.files.size() == m2.files.size());
  for (std::size_t i = 0; i < m1.files.size(); ++i) {
    CHECK(m1.files[i].file == m2.files[i].file);
    CHECK_MESSAGE(m1.files[i].hash == m2.files[i].hash, m1.files[i].file);
  }
  for (const char* f : {"ranking.csv", "balance.csv", "overlap.csv", "cate_by_k.csv"}) {
    CHECK(slurp(d1 / f).rfind("# config_hash=" + r1.config_hash + "\n", 0) == 0);
  }
  CHECK(slurp(d1 / "summary.md").find(r1.config_hash) != std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(d1 / "manifest.json")).get<Manifest>();
  CHECK(manifest.config_hash == r1.config_hash);
  REQUIRE(manifest.find("report.json") != nullptr);
  CHECK(manifest.find("report.json")->hash == content_hash(slurp(d1 / "report.json")));
  CHECK(nlohmann::json::parse(slurp(d1 / "sensitivity.json")).at("config_hash") == r1.config_hash);

  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("pipeline: emitting an empty report writes report.json only") {
  RunReport r;
  r.config_hash = "0000000000000000";
  const auto dir = scratch("empty");
  const auto m = emit_report(r, dir);
  REQUIRE(m.files.size() == 1);
  CHECK(m.files[0].file == "report.json");
  CHECK(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("pipeline: unwritable output directory names the path") {
  const auto blocker = scratch("blocker");
  std::ofstream(blocker) << "a file, not a directory";
  RunReport r;
  try {
    emit_report(r, blocker / "out");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(blocker.string()) != std::string::npos);
  }
  fs::remove(blocker);
}

TEST_CASE("pipeline: a failing stage is reported, not thrown") {
  auto cfg = parse_run_config(kSmall);
  cfg.sensitivity.enabled = false;
  cfg.validation.enabled = false;
  // Every unit treated: the propensity stage cannot run.
  const auto sim = simulate_cohort(cfg.sim);
  const auto all_treated = sim.observed.with_treatment(Vector::Ones(static_cast<Eigen::Index>(sim.observed.n())));
  const auto r = run_pipeline_on(cfg, all_treated, {}, std::nullopt);
  CHECK(r.any_failure());
  CHECK_FALSE(r.weighting_error.empty());
}

#ifdef SPLITRANK_CLI_PATH
namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(SPLITRANK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cli: exit codes and outputs") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "small.json") << kSmall;
  std::ofstream(dir / "bad.json") << R"({"modles": []})";

  CHECK(cli("simulate --config " + (dir / "small.json").string() + " --out " + (dir / "sim").string()) == 0);
  for (const char* f : {"observed.csv", "oracle.csv", "sim_config.json"}) CHECK(fs::exists(dir / "sim" / f));
  CHECK(slurp(dir / "sim" / "observed.csv").rfind("# config_hash=", 0) == 0);

  CHECK(cli("balance --config " + (dir / "small.json").string() + " --data " + (dir / "sim" / "observed.csv").string() +
            " --out " + (dir / "bal").string()) == 0);
  CHECK(fs::exists(dir / "bal" / "balance.csv"));

  CHECK(cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "bad").string()) == 1);
  CHECK(cli("run --no-such-flag") == 1);
  CHECK(cli("rank --data " + (dir / "missing.csv").string() + " --out " + (dir / "r").string()) == 2);
  fs::remove_all(dir);
}
#endif

// splitrank command line: simulate, fit, rank, stress-test and validate.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "splitrank/error.hpp"
#include "splitrank/report.hpp"

namespace fs = std::filesystem;
using namespace splitrank;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kStageError = 2;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string schema;
};

void add_common(CLI::App* sub, CommonArgs& a, bool data_flags) {
  sub->add_option("--config", a.config, "JSON run config (defaults when omitted)");
  sub->add_option("--seed", a.seed, "master seed, overrides the config");
  sub->add_option("--out", a.out, "output directory, overrides the config");
  if (data_flags) {
    sub->add_option("--data", a.data, "observed CSV instead of a simulated cohort");
    sub->add_option("--schema", a.schema, "JSON schema for --data (default: id, x*, a, y)");
  }
}

RunConfig resolve_config(const CommonArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.seed) cfg.set_seed(*a.seed);
  if (!a.out.empty()) cfg.output_dir = a.out;
  cfg.validate();
  return cfg;
}

// Observed data plus whatever truth is available: simulated unless --data.
struct Inputs {
  Dataset observed;
  std::vector<int> truth;
  std::optional<SimConfig> sim;
};

Inputs load_inputs(const RunConfig& cfg, const CommonArgs& a) {
  Inputs in;
  if (a.data.empty()) {
    const auto s = simulate_cohort(cfg.sim);
    in.observed = s.observed;
    in.truth = ground_truth_rank(s.oracle);
    in.sim = cfg.sim;
    return in;
  }
  const Schema schema = a.schema.empty() ? detect_schema(fs::path(a.data)) : load_schema(a.schema);
  const Dataset d = load_dataset(a.data, schema);
  if (d.has_ground_truth()) in.truth = ground_truth_rank(d);
  in.observed = d.without_ground_truth();
  return in;
}

void report_errors(const RunReport& r) {
  if (!r.weighting_error.empty()) std::cerr << "propensity stage: " << r.weighting_error << "\n";
  for (const auto& m : r.models) {
    if (!m.error.empty()) std::cerr << m.spec.name << ": " << m.error << "\n";
    if (!m.placebo_error.empty()) std::cerr << m.spec.name << " placebo: " << m.placebo_error << "\n";
    if (!m.confounding_error.empty()) std::cerr << m.spec.name << " confounding: " << m.confounding_error << "\n";
    if (!m.validation_error.empty()) std::cerr << m.spec.name << " validation: " << m.validation_error << "\n";
  }
}

int finish(const RunReport& r, const Manifest& man, const fs::path& dir) {
  write_manifest(dir, man);
  for (const auto& f : man.files) std::cout << (dir / f.file).string() << "  " << f.hash << "\n";
  report_errors(r);
  return r.any_failure() ? kStageError : kOk;
}

int cmd_simulate(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const auto hash = config_hash(cfg);
  const auto out = simulate_cohort(cfg.sim);
  const fs::path dir = cfg.output_dir;
  Manifest man;
  man.config_hash = hash;
  const auto k = static_cast<std::size_t>(cfg.sim.k);
  man.files.push_back(write_output(dir, "observed.csv",
                                   with_hash_header(format_dataset(out.observed, Schema::standard(k, false)), hash)));
  man.files.push_back(
      write_output(dir, "oracle.csv", with_hash_header(format_dataset(out.oracle, Schema::standard(k, true)), hash)));
  nlohmann::json echo = {{"config_hash", hash}, {"sim", cfg.sim}, {"master_seed", cfg.master_seed}};
  man.files.push_back(write_output(dir, "sim_config.json", echo.dump(2) + "\n"));
  write_manifest(dir, man);
  for (const auto& f : man.files) std::cout << (dir / f.file).string() << "  " << f.hash << "\n";
  return kOk;
}

int cmd_balance(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const auto in = load_inputs(cfg, a);
  const auto w = compute_weights(in.observed, cfg.analysis);
  const fs::path dir = cfg.output_dir;
  Manifest man;
  man.config_hash = config_hash(cfg);
  man.files.push_back(write_output(dir, "balance.csv", with_hash_header(format_balance_csv(w.balance), man.config_hash)));
  write_manifest(dir, man);
  std::cout << "mean SMD before " << w.balance.mean_before() << ", after " << w.balance.mean_after() << "; "
            << w.trimmed.n() << " of " << in.observed.n() << " units retained\n";
  return kOk;
}

RunConfig only_analysis(RunConfig cfg) {
  cfg.sensitivity.enabled = false;
  cfg.validation.enabled = false;
  return cfg;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

int cmd_analyze(const CommonArgs& a) {
  const auto cfg = only_analysis(resolve_config(a));
  const auto in = load_inputs(cfg, a);
  const auto r = run_pipeline_on(cfg, in.observed, in.truth, in.sim);
  const fs::path dir = cfg.output_dir;
  Manifest man;
  man.config_hash = r.config_hash;
  std::ostringstream ite;
  ite << "model,index,id,ite,y_hat_1,y_hat_0\n";
  for (const auto& m : r.models) {
    if (!m.model) continue;
    const auto t = compute_ite(*m.model, in.observed);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto q = static_cast<Eigen::Index>(i);
      ite << m.spec.name << ',' << i << ',' << t.ids[i] << ',' << format_double(t.ite[q]) << ','
          << format_double(t.y_hat_1[q]) << ',' << format_double(t.y_hat_0[q]) << '\n';
    }
    nlohmann::json mj = *m.model;
    mj["name"] = m.spec.name;
    mj["config_hash"] = r.config_hash;
    mj["covariates"] = in.observed.covariate_names();
    man.files.push_back(write_output(dir, "model_" + safe_name(m.spec.name) + ".json", mj.dump(2) + "\n"));
  }
  man.files.push_back(write_output(dir, "ite.csv", with_hash_header(ite.str(), r.config_hash)));
  if (r.balance) man.files.push_back(write_output(dir, "balance.csv", with_hash_header(balance_csv(r), r.config_hash)));
  man.files.push_back(write_output(dir, "report.json", to_json(r).dump(2) + "\n"));
  return finish(r, man, dir);
}

int cmd_rank(const CommonArgs& a, const std::string& model_path) {
  const auto cfg = only_analysis(resolve_config(a));
  const fs::path dir = cfg.output_dir;
  const auto in = load_inputs(cfg, a);
  if (model_path.empty()) {
    const auto r = run_pipeline_on(cfg, in.observed, in.truth, in.sim);
    Manifest man;
    man.config_hash = r.config_hash;
    man.files.push_back(write_output(dir, "ranking.csv", with_hash_header(ranking_csv(r), r.config_hash)));
    return finish(r, man, dir);
  }
  // Rank with a persisted model; no refitting.
  std::ifstream f(model_path);
  if (!f) throw DataError("cannot open model file " + model_path);
  nlohmann::json mj;
  try {
    f >> mj;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file " + model_path + ": " + e.what());
  }
  const auto model = mj.get<OutcomeModel>();
  RunReport r;
  r.config_hash = config_hash(cfg);
  r.config = cfg;
  r.truth_levels = in.truth;
  r.n_units = in.observed.n();
  ModelReport m;
  m.spec.name = mj.value("name", std::string("model"));
  m.spec.family = model.family();
  m.ranking = rank_and_bucket(compute_ite(model, in.observed), cfg.analysis.levels);
  if (!in.truth.empty()) m.rank_rmse = rank_rmse(*m.ranking, in.truth);
  r.models.push_back(m);
  Manifest man;
  man.config_hash = r.config_hash;
  man.files.push_back(write_output(dir, "ranking.csv", with_hash_header(ranking_csv(r), r.config_hash)));
  if (m.rank_rmse) std::cout << "rank RMSE vs truth " << *m.rank_rmse << "\n";
  return finish(r, man, dir);
}

int cmd_sensitivity(const CommonArgs& a) {
  auto cfg = resolve_config(a);
  cfg.sensitivity.enabled = true;
  cfg.validation.enabled = false;
  const auto in = load_inputs(cfg, a);
  const auto r = run_pipeline_on(cfg, in.observed, in.truth, in.sim);
  const fs::path dir = cfg.output_dir;
  Manifest man;
  man.config_hash = r.config_hash;
  man.files.push_back(write_output(dir, "sensitivity.json", sensitivity_json(r).dump(2) + "\n"));
  man.files.push_back(write_output(dir, "overlap.csv", with_hash_header(overlap_csv(r), r.config_hash)));
  return finish(r, man, dir);
}

int cmd_validate(const CommonArgs& a) {
  auto cfg = resolve_config(a);
  cfg.sensitivity.enabled = false;
  cfg.validation.enabled = true;
  const auto r = run_pipeline(cfg);
  const fs::path dir = cfg.output_dir;
  Manifest man;
  man.config_hash = r.config_hash;
  man.files.push_back(write_output(dir, "cate_by_k.csv", with_hash_header(cate_by_k_csv(r), r.config_hash)));
  return finish(r, man, dir);
}

int cmd_run(const CommonArgs& a) {
  const auto cfg = resolve_config(a);
  const auto in = load_inputs(cfg, a);
  const auto r = run_pipeline_on(cfg, in.observed, in.truth, in.sim);
  const fs::path dir = cfg.output_dir;
  const auto man = emit_report(r, dir);
  return finish(r, man, dir);
}

// Re-renders summary.md from an existing report.json and refreshes the
// manifest over the files present.
int cmd_report(const CommonArgs& a) {
  const fs::path dir = a.out.empty() ? fs::path(resolve_config(a).output_dir) : fs::path(a.out);
  const auto path = dir / "report.json";
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  nlohmann::json rj;
  try {
    f >> rj;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  Manifest man;
  man.config_hash = rj.value("config_hash", std::string{});
  for (const char* name : {"report.json", "ranking.csv", "balance.csv", "sensitivity.json", "overlap.csv",
                           "cate_by_k.csv"}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) continue;
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto s = ss.str();
    man.files.push_back({name, s.size(), content_hash(s)});
  }
  man.files.push_back(write_output(dir, "summary.md", render_summary(rj)));
  write_manifest(dir, man);
  std::cout << (dir / "summary.md").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitrank: rank units by estimated proxy-treatment effect"};
  app.set_version_flag("--version", std::string(SPLITRANK_VERSION));
  app.require_subcommand(1);

  CommonArgs args;
  std::string model_path;
  auto* sim = app.add_subcommand("simulate", "draw a cohort: observed.csv, oracle.csv, sim_config.json");
  add_common(sim, args, false);
  auto* bal = app.add_subcommand("balance", "propensity fit, trimming and covariate balance: balance.csv");
  add_common(bal, args, true);
  auto* ana = app.add_subcommand("analyze", "fit the configured models: model_*.json, ite.csv");
  add_common(ana, args, true);
  auto* rnk = app.add_subcommand("rank", "rank units by ITE: ranking.csv");
  add_common(rnk, args, true);
  rnk->add_option("--model", model_path, "persisted model JSON to rank with instead of fitting");
  auto* sen = app.add_subcommand("sensitivity", "placebo and synthetic confounder tests: sensitivity.json, overlap.csv");
  add_common(sen, args, true);
  auto* val = app.add_subcommand("validate", "IV validation on a simulated campaign: cate_by_k.csv");
  add_common(val, args, false);
  auto* run = app.add_subcommand("run", "every stage plus report.json, summary.md and manifest.json");
  add_common(run, args, true);
  auto* rep = app.add_subcommand("report", "re-render summary.md and manifest.json from report.json");
  add_common(rep, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (sim->parsed()) return cmd_simulate(args);
    if (bal->parsed()) return cmd_balance(args);
    if (ana->parsed()) return cmd_analyze(args);
    if (rnk->parsed()) return cmd_rank(args, model_path);
    if (sen->parsed()) return cmd_sensitivity(args);
    if (val->parsed()) return cmd_validate(args);
    if (run->parsed()) return cmd_run(args);
    if (rep->parsed()) return cmd_report(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageError;
  }
  return kConfigError;
}

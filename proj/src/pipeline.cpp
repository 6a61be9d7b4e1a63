#include "splitrank/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "splitrank/error.hpp"
#include "splitrank/rng.hpp"

namespace splitrank {

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  sim.validate();
  analysis.validate();
  if (models.empty()) throw ConfigError("config needs at least one outcome model");
  std::set<std::string> names;
  for (const auto& m : models) {
    m.hyperparams.validate(m.family);
    if (m.name.empty()) throw ConfigError("model names must be non-empty");
    if (!names.insert(m.name).second) throw ConfigError("duplicate model name '" + m.name + "'");
  }
  for (const auto& c : sensitivity.configs) c.validate();
  if (sensitivity.runs < 1) throw ConfigError("sensitivity.runs must be at least 1");
  if (sensitivity.bootstrap_resamples < 2) throw ConfigError("sensitivity.bootstrap_resamples must be at least 2");
  if (!(validation.exposure > 0.0 && validation.exposure < 1.0)) throw ConfigError("validation.exposure must be in (0, 1)");
  if (validation.campaign_n && *validation.campaign_n < 2) throw ConfigError("validation.campaign_n must be at least 2");
  for (double k : k_grid) {
    if (!(k > 0.0 && k <= 100.0)) throw ConfigError("k_grid entries must be in (0, 100]");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");
}

void RunConfig::set_seed(std::uint64_t seed) {
  master_seed = seed;
  sim.seed = seed;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json confounders = nlohmann::json::array();
  for (const auto& cc : c.sensitivity.configs) confounders.push_back(cc);
  j = nlohmann::json{
      {"master_seed", c.master_seed},
      {"sim", c.sim},
      {"models", c.models},
      {"analysis", c.analysis},
      {"sensitivity",
       {{"enabled", c.sensitivity.enabled},
        {"placebo", c.sensitivity.placebo},
        {"configs", confounders},
        {"runs", c.sensitivity.runs},
        {"bootstrap_resamples", c.sensitivity.bootstrap_resamples}}},
      {"validation",
       {{"enabled", c.validation.enabled},
        {"exposure", c.validation.exposure},
        {"campaign_n", c.validation.campaign_n ? nlohmann::json(*c.validation.campaign_n) : nlohmann::json(nullptr)},
        {"min_arm", c.validation.min_arm}}},
      {"k_grid", c.k_grid},
      {"output_dir", c.output_dir}};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

void from_json(const nlohmann::json& j, RunConfig& c) {
  c = RunConfig{};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"master_seed", "seed", "sim", "models", "analysis", "trim_quantiles", "sensitivity", "validation",
                  "k_grid", "output_dir"},
                 "config");
  try {
    if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("seed")) c.master_seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("sim")) {
      c.sim = j.at("sim").get<SimConfig>();
      if (!j.at("sim").contains("seed")) c.sim.seed = c.master_seed;
    } else {
      c.sim.seed = c.master_seed;
    }
    if (j.contains("models")) {
      const auto& m = j.at("models");
      if (m.is_null() || !m.is_array() || m.empty()) throw ConfigError("'models' must be a non-empty list");
      c.models.clear();
      for (const auto& e : m) c.models.push_back(e.get<ModelSpec>());
    }
    if (j.contains("analysis")) c.analysis = j.at("analysis").get<AnalysisConfig>();
    if (j.contains("trim_quantiles")) {
      const auto q = j.at("trim_quantiles").get<std::vector<double>>();
      if (q.size() != 2) throw ConfigError("trim_quantiles must be [lo, hi]");
      c.analysis.trim_lo = q[0];
      c.analysis.trim_hi = q[1];
    }
    if (j.contains("sensitivity")) {
      const auto& s = j.at("sensitivity");
      if (!s.is_object()) throw ConfigError("'sensitivity' must be an object");
      reject_unknown(s, {"enabled", "placebo", "configs", "runs", "bootstrap_resamples"}, "sensitivity");
      c.sensitivity.enabled = s.value("enabled", c.sensitivity.enabled);
      c.sensitivity.placebo = s.value("placebo", c.sensitivity.placebo);
      c.sensitivity.runs = s.value("runs", c.sensitivity.runs);
      c.sensitivity.bootstrap_resamples = s.value("bootstrap_resamples", c.sensitivity.bootstrap_resamples);
      if (s.contains("configs")) {
        c.sensitivity.configs.clear();
        for (const auto& e : s.at("configs")) c.sensitivity.configs.push_back(e.get<ConfounderConfig>());
      }
    }
    if (j.contains("validation")) {
      const auto& v = j.at("validation");
      if (!v.is_object()) throw ConfigError("'validation' must be an object");
      reject_unknown(v, {"enabled", "exposure", "campaign_n", "min_arm"}, "validation");
      c.validation.enabled = v.value("enabled", c.validation.enabled);
      c.validation.exposure = v.value("exposure", c.validation.exposure);
      if (v.contains("campaign_n") && !v.at("campaign_n").is_null()) {
        c.validation.campaign_n = v.at("campaign_n").get<std::int64_t>();
      }
      c.validation.min_arm = v.value("min_arm", c.validation.min_arm);
    }
    if (j.contains("k_grid")) c.k_grid = j.at("k_grid").get<std::vector<double>>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
}

RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = text.find_first_not_of(" \t\r\n") == std::string::npos ? nlohmann::json::object() : nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return j.get<RunConfig>();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string config_hash(const RunConfig& c) {
  nlohmann::json j = c;
  j.erase("output_dir");
  return content_hash(j.dump());
}

// ---------------------------------------------------------------------------
// Run

bool RunReport::any_failure() const {
  return !weighting_error.empty() || std::any_of(models.begin(), models.end(), [](const ModelReport& m) {
           return !m.ok() || !m.placebo_error.empty() || !m.confounding_error.empty() || !m.validation_error.empty();
         });
}

namespace {

struct SharedInputs {
  const RunConfig* cfg = nullptr;
  const Dataset* observed = nullptr;
  const std::vector<int>* truth = nullptr;
  const WeightingResult* weighting = nullptr;
  std::string weighting_error;
  const IVExperiment* campaign = nullptr;
  std::string campaign_error;
};

std::vector<double> as_doubles(const std::vector<int>& v) { return {v.begin(), v.end()}; }

ModelReport run_model(const SharedInputs& in, const ModelSpec& spec) {
  const auto& cfg = *in.cfg;
  ModelReport rep;
  rep.spec = spec;
  if (spec.causal && in.weighting == nullptr) {
    rep.error = "propensity stage failed: " + in.weighting_error;
    return rep;
  }
  AnalysisResult res;
  try {
    res = run_analysis(*in.observed, spec, cfg.analysis, spec.causal ? in.weighting : nullptr);
  } catch (const std::exception& e) {
    rep.error = e.what();
    return rep;
  }
  rep.fitted_units = res.fitted.n();
  if (res.weighting) {
    rep.mean_weight_treated = res.weighting->mean_weight(1);
    rep.mean_weight_control = res.weighting->mean_weight(0);
  }
  if (!in.truth->empty()) {
    rep.rank_rmse = rank_rmse(res.ranking, *in.truth);
    const auto est = as_doubles(res.ranking.level);
    const auto tru = as_doubles(*in.truth);
    rep.spearman = spearman(est, tru);
  }

  if (cfg.sensitivity.enabled && cfg.sensitivity.placebo) {
    try {
      rep.placebo = placebo_test(*in.observed, spec, cfg.analysis, res.ranking,
                                 rng::substream_seed(cfg.master_seed, rng::stream_tag("placebo")),
                                 cfg.sensitivity.bootstrap_resamples, *in.truth);
    } catch (const std::exception& e) {
      rep.placebo_error = e.what();
    }
  }
  if (cfg.sensitivity.enabled && !cfg.sensitivity.configs.empty()) {
    try {
      rep.confounding = confounding_overlap(*in.observed, spec, cfg.analysis, res.ranking, cfg.sensitivity.configs,
                                            cfg.sensitivity.runs, cfg.master_seed);
      rep.confounding_summary = summarize(rep.confounding);
    } catch (const std::exception& e) {
      rep.confounding_error = e.what();
    }
  }
  if (cfg.validation.enabled) {
    if (in.campaign == nullptr) {
      rep.validation_error = in.campaign_error;
    } else {
      try {
        IVExperiment e = *in.campaign;
        e.predicted_ite = compute_ite(res.model, e.data).ite;
        rep.validation = validate_ranking_splits(e, cfg.k_grid, cfg.validation.min_arm);
      } catch (const std::exception& e) {
        rep.validation_error = e.what();
      }
    }
  }
  rep.model = std::move(res.model);
  rep.ranking = std::move(res.ranking);
  return rep;
}

}  // namespace

RunReport run_pipeline_on(const RunConfig& cfg, const Dataset& observed, std::vector<int> truth_levels,
                          const std::optional<SimConfig>& sim) {
  cfg.validate();
  if (!truth_levels.empty() && truth_levels.size() != observed.n()) {
    throw DataError("truth levels do not match the dataset rows");
  }
  RunReport rep;
  rep.seed = cfg.master_seed;
  rep.config_hash = config_hash(cfg);
  rep.config = cfg;
  rep.config.erase("output_dir");
  rep.sim = sim;
  rep.truth_levels = std::move(truth_levels);
  rep.n_units = observed.n();

  SharedInputs in;
  in.cfg = &cfg;
  in.observed = &observed;
  in.truth = &rep.truth_levels;

  std::optional<WeightingResult> weighting;
  const bool any_causal = std::any_of(cfg.models.begin(), cfg.models.end(), [](const auto& m) { return m.causal; });
  if (any_causal) {
    try {
      weighting = compute_weights(observed, cfg.analysis);
      rep.balance = weighting->balance;
      rep.mean_weight_treated = weighting->mean_weight(1);
      rep.mean_weight_control = weighting->mean_weight(0);
      rep.n_retained = weighting->trimmed.n();
      in.weighting = &*weighting;
    } catch (const std::exception& e) {
      rep.weighting_error = e.what();
      in.weighting_error = e.what();
    }
  }

  std::optional<IVExperiment> campaign;
  if (cfg.validation.enabled) {
    if (!sim) {
      in.campaign_error = "IV validation needs a simulated world; skipped for external data";
    } else {
      try {
        SimConfig c = *sim;
        if (cfg.validation.campaign_n) c.n = *cfg.validation.campaign_n;
        campaign = simulate_campaign(c, cfg.validation.exposure, 1);
        in.campaign = &*campaign;
      } catch (const std::exception& e) {
        in.campaign_error = e.what();
      }
    }
  }

  // Models run concurrently; results are collected in config order.
  std::vector<std::future<ModelReport>> jobs;
  for (const auto& spec : cfg.models) {
    jobs.push_back(std::async(std::launch::async, [&in, spec] { return run_model(in, spec); }));
  }
  for (auto& j : jobs) rep.models.push_back(j.get());
  return rep;
}

RunReport run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const auto sim = simulate_cohort(cfg.sim);
  return run_pipeline_on(cfg, sim.observed, ground_truth_rank(sim.oracle), cfg.sim);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

nlohmann::json placebo_json(const PlaceboRecord& p) {
  return {{"ate_estimate", p.ate_estimate},
          {"ate_se", p.ate_se},
          {"rank_rmse_vs_original", p.rank_rmse_vs_original},
          {"rank_rmse_vs_truth", opt(p.rank_rmse_vs_truth)},
          {"fitted_units", p.fitted_units},
          {"bootstrap_resamples", p.bootstrap_resamples}};
}

}  // namespace

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["format"] = "splitrank-report";
  j["version"] = r.version;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["config"] = r.config;
  j["n_units"] = r.n_units;
  j["n_retained"] = r.n_retained;
  j["ground_truth"] = !r.truth_levels.empty();
  if (!r.weighting_error.empty()) j["weighting_error"] = r.weighting_error;
  if (r.balance) {
    j["balance"] = {{"threshold", r.balance->threshold},
                    {"mean_smd_before", r.balance->mean_before()},
                    {"mean_smd_after", r.balance->mean_after()},
                    {"fraction_improved", r.balance->fraction_improved()},
                    {"flagged", r.balance->flagged},
                    {"mean_weight_treated", opt(r.mean_weight_treated)},
                    {"mean_weight_control", opt(r.mean_weight_control)}};
  }
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : r.models) {
    nlohmann::json mj = m.spec;
    mj["status"] = m.ok() ? "ok" : "failed";
    if (!m.ok()) {
      mj["error"] = m.error;
      models.push_back(mj);
      continue;
    }
    mj["fitted_units"] = m.fitted_units;
    mj["rank_rmse"] = opt(m.rank_rmse);
    mj["spearman"] = opt(m.spearman);
    mj["mean_weight_treated"] = opt(m.mean_weight_treated);
    mj["mean_weight_control"] = opt(m.mean_weight_control);
    if (m.placebo) mj["placebo"] = placebo_json(*m.placebo);
    if (!m.placebo_error.empty()) mj["placebo_error"] = m.placebo_error;
    if (!m.confounding_summary.empty()) {
      nlohmann::json s = nlohmann::json::array();
      for (const auto& c : m.confounding_summary) {
        s.push_back({{"config", c.config_index},
                     {"alpha", c.alpha},
                     {"epsilon", c.epsilon},
                     {"runs", c.runs},
                     {"overlap_mean", c.overlap_mean},
                     {"overlap_sd", c.overlap_sd},
                     {"rank_rmse_mean", c.rank_rmse_mean},
                     {"rank_rmse_sd", c.rank_rmse_sd},
                     {"corr_u_a_mean", c.corr_u_a_mean},
                     {"corr_u_y_mean", c.corr_u_y_mean}});
      }
      mj["confounding"] = s;
    }
    if (!m.confounding_error.empty()) mj["confounding_error"] = m.confounding_error;
    if (m.validation) {
      mj["validation"] = {{"evaluated", m.validation->evaluated()},
                          {"all_separated", m.validation->all_separated()},
                          {"notes", m.validation->notes}};
    }
    if (!m.validation_error.empty()) mj["validation_error"] = m.validation_error;
    if (m.model) mj["model"] = *m.model;
    models.push_back(mj);
  }
  j["models"] = models;
  return j;
}

}  // namespace splitrank

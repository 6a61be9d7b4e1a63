#include "splitrank/analysis.hpp"

#include "splitrank/error.hpp"

namespace splitrank {

void to_json(nlohmann::json& j, const ModelSpec& m) {
  j = nlohmann::json{{"name", m.name}, {"family", to_string(m.family)}, {"causal", m.causal}};
  j["hyperparams"] = m.hyperparams;
}

void from_json(const nlohmann::json& j, ModelSpec& m) {
  if (!j.is_object()) throw ConfigError("model entry must be a JSON object");
  m = ModelSpec{};
  try {
    if (!j.contains("family")) throw ConfigError("model entry needs a 'family'");
    m.family = family_from_string(j.at("family").get<std::string>());
    m.causal = j.value("causal", true);
    m.name = j.value("name", std::string(m.causal ? "IPTW-" : "") + to_string(m.family));
    if (j.contains("hyperparams")) m.hyperparams = j.at("hyperparams").get<Hyperparams>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model entry: ") + e.what());
  }
  m.hyperparams.validate(m.family);
}

std::vector<ModelSpec> default_models() {
  ModelSpec lr;
  lr.name = "IPTW-LR";
  lr.family = Family::linear_wls;
  ModelSpec svr;
  svr.name = "IPTW-SVR";
  svr.family = Family::svr_linear;
  return {lr, svr};
}

void AnalysisConfig::validate() const {
  if (!(trim_lo >= 0.0 && trim_lo < trim_hi && trim_hi <= 1.0)) {
    throw ConfigError("trim quantiles need 0 <= lo < hi <= 1");
  }
  if (levels < 1) throw ConfigError("levels must be at least 1");
  if (!(balance_threshold > 0.0)) throw ConfigError("balance_threshold must be positive");
  if (propensity.l2 < 0.0 || !(propensity.tol > 0.0) || propensity.max_iter < 1) {
    throw ConfigError("propensity options need l2 >= 0, tol > 0, max_iter >= 1");
  }
}

void to_json(nlohmann::json& j, const AnalysisConfig& c) {
  j = nlohmann::json{{"trim_lo", c.trim_lo},
                     {"trim_hi", c.trim_hi},
                     {"refit_after_trim", c.refit_after_trim},
                     {"propensity_l2", c.propensity.l2},
                     {"propensity_tol", c.propensity.tol},
                     {"propensity_max_iter", c.propensity.max_iter},
                     {"levels", c.levels},
                     {"balance_threshold", c.balance_threshold}};
}

void from_json(const nlohmann::json& j, AnalysisConfig& c) {
  c = AnalysisConfig{};
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("analysis config must be a JSON object");
  try {
    c.trim_lo = j.value("trim_lo", c.trim_lo);
    c.trim_hi = j.value("trim_hi", c.trim_hi);
    c.refit_after_trim = j.value("refit_after_trim", c.refit_after_trim);
    c.propensity.l2 = j.value("propensity_l2", c.propensity.l2);
    c.propensity.tol = j.value("propensity_tol", c.propensity.tol);
    c.propensity.max_iter = j.value("propensity_max_iter", c.propensity.max_iter);
    c.levels = j.value("levels", c.levels);
    c.balance_threshold = j.value("balance_threshold", c.balance_threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("analysis config: ") + e.what());
  }
  c.validate();
}

double WeightingResult::mean_weight(int arm) const {
  const auto& a = trimmed.treatment();
  double s = 0.0;
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (static_cast<int>(a[i]) == arm) {
      s += weights[i];
      ++c;
    }
  }
  return c ? s / static_cast<double>(c) : 0.0;
}

WeightingResult compute_weights(const Dataset& d, const AnalysisConfig& cfg) {
  WeightingResult r;
  r.initial = fit_propensity(d, cfg.propensity);
  auto [trimmed, trimmed_fit] = trim_extremes(r.initial, d, cfg.trim_lo, cfg.trim_hi);
  r.retained = trim_mask(r.initial.scores, trimmed_fit.trim->lo, trimmed_fit.trim->hi);
  r.trimmed = std::move(trimmed);
  r.fit = cfg.refit_after_trim ? fit_propensity(r.trimmed, cfg.propensity) : std::move(trimmed_fit);
  r.weights = stabilized_weights(r.fit, r.trimmed);
  r.balance = balance_report(r.trimmed, std::span<const double>(r.weights.data(), static_cast<std::size_t>(r.weights.size())),
                             cfg.balance_threshold);
  return r;
}

AnalysisResult run_analysis(const Dataset& d, const ModelSpec& spec, const AnalysisConfig& cfg,
                            const WeightingResult* weighting) {
  cfg.validate();
  if (!d.both_arms_present()) throw EstimationError("no variation in treatment");
  AnalysisResult r;
  if (spec.causal) {
    r.weighting = weighting ? *weighting : compute_weights(d, cfg);
    r.fitted = r.weighting->trimmed;
    r.fit_weights = r.weighting->weights;
  } else {
    r.fitted = d;
  }
  r.model = fit_outcome_model(r.fitted, std::span<const double>(r.fit_weights.data(), static_cast<std::size_t>(r.fit_weights.size())),
                              spec.family, spec.hyperparams);
  r.ite = compute_ite(r.model, d);
  r.ranking = rank_and_bucket(r.ite, cfg.levels);
  return r;
}

}  // namespace splitrank

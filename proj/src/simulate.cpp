#include "splitrank/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "splitrank/error.hpp"
#include "splitrank/rng.hpp"

namespace splitrank {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

bool open_unit(double p) { return p > 0.0 && p < 1.0; }
bool closed_unit(double p) { return p >= 0.0 && p <= 1.0; }

template <typename E>
E enum_from(const std::string& s, const std::map<std::string, E>& table, const char* what) {
  const auto it = table.find(s);
  if (it == table.end()) throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
  return it->second;
}

const std::map<std::string, SimMode> kModes = {{"clean", SimMode::clean},
                                               {"confounded", SimMode::confounded},
                                               {"negative_compliance", SimMode::negative_compliance}};
const std::map<std::string, GroupAssignment> kAssignments = {
    {"covariate_quantile", GroupAssignment::covariate_quantile}, {"random", GroupAssignment::random}};
const std::map<std::string, OutcomeChannel> kChannels = {{"target", OutcomeChannel::target},
                                                         {"proxy", OutcomeChannel::proxy}};

template <typename E>
std::string enum_name(E v, const std::map<std::string, E>& table) {
  for (const auto& [k, e] : table) {
    if (e == v) return k;
  }
  return "?";
}

}  // namespace

std::string to_string(SimMode m) { return enum_name(m, kModes); }
SimMode sim_mode_from_string(const std::string& s) { return enum_from(s, kModes, "simulation mode"); }

ComplianceTable SimConfig::effective_compliance() const {
  if (compliance) return *compliance;
  if (mode == SimMode::negative_compliance) return ComplianceTable{0.4, 0.6};
  return ComplianceTable{};
}

void SimConfig::validate() const {
  if (n <= 0) throw ConfigError("n must be positive");
  if (k <= 0) throw ConfigError("k must be positive");
  if (cate_levels.empty()) throw ConfigError("cate_levels must not be empty");
  if (static_cast<std::int64_t>(cate_levels.size()) > n) throw ConfigError("more CATE groups than units");
  if (coef_probs.empty()) throw ConfigError("coef_probs must not be empty");
  double total = 0.0;
  for (double p : coef_probs) {
    if (!closed_unit(p)) throw ConfigError("coef_probs entries must lie in [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("coef_probs must sum to 1");
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be non-negative");
  if (!open_unit(z_assignment_prob)) throw ConfigError("z_assignment_prob must lie in (0, 1)");
  if (static_cast<std::int64_t>(z_logit_weights.size()) > k) throw ConfigError("more z_logit_weights than covariates");
  if (group_covariate < 0 || group_covariate >= k) throw ConfigError("group_covariate out of range");
  const auto t = effective_compliance();
  if (!closed_unit(t.p_a1_given_z1) || !closed_unit(t.p_a1_given_z0)) {
    throw ConfigError("compliance probabilities must lie in [0, 1]");
  }
  if (mode == SimMode::negative_compliance) {
    if (!(t.p_a1_given_z1 < t.p_a1_given_z0)) {
      throw ConfigError("negative_compliance mode needs p_a1_given_z1 < p_a1_given_z0");
    }
  } else if (!(t.p_a1_given_z1 > t.p_a1_given_z0)) {
    throw ConfigError("positive compliance needs p_a1_given_z1 > p_a1_given_z0");
  }
  if (mode == SimMode::confounded && confounder_affects_treatment &&
      (!open_unit(t.p_a1_given_z1) || !open_unit(t.p_a1_given_z0))) {
    throw ConfigError("confounded mode shifts the treatment logit; compliance probabilities must lie in (0, 1)");
  }
  if (!std::isfinite(confounder_strength)) throw ConfigError("confounder_strength must be finite");
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  const auto t = c.effective_compliance();
  j = nlohmann::json{{"n", c.n},
                     {"k", c.k},
                     {"cate_levels", c.cate_levels},
                     {"coef_probs", c.coef_probs},
                     {"noise_sd", c.noise_sd},
                     {"compliance_table", {{"p_a1_given_z1", t.p_a1_given_z1}, {"p_a1_given_z0", t.p_a1_given_z0}}},
                     {"z_assignment_prob", c.z_assignment_prob},
                     {"z_logit_weights", c.z_logit_weights},
                     {"mode", to_string(c.mode)},
                     {"confounder_strength", c.confounder_strength},
                     {"confounder_affects_treatment", c.confounder_affects_treatment},
                     {"group_assignment", enum_name(c.group_assignment, kAssignments)},
                     {"group_covariate", c.group_covariate},
                     {"outcome_channel", enum_name(c.outcome_channel, kChannels)},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  c = SimConfig{};
  if (!j.is_object()) throw ConfigError("sim config must be a JSON object");
  try {
    c.n = j.value("n", c.n);
    c.k = j.value("k", c.k);
    c.cate_levels = j.value("cate_levels", c.cate_levels);
    c.coef_probs = j.value("coef_probs", c.coef_probs);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    if (j.contains("compliance_table") && !j.at("compliance_table").is_null()) {
      const auto& t = j.at("compliance_table");
      ComplianceTable table;
      table.p_a1_given_z1 = t.at("p_a1_given_z1").get<double>();
      table.p_a1_given_z0 = t.at("p_a1_given_z0").get<double>();
      c.compliance = table;
    }
    c.z_assignment_prob = j.value("z_assignment_prob", c.z_assignment_prob);
    c.z_logit_weights = j.value("z_logit_weights", c.z_logit_weights);
    if (j.contains("mode")) c.mode = sim_mode_from_string(j.at("mode").get<std::string>());
    c.confounder_strength = j.value("confounder_strength", c.confounder_strength);
    c.confounder_affects_treatment = j.value("confounder_affects_treatment", c.confounder_affects_treatment);
    if (j.contains("group_assignment")) {
      c.group_assignment = enum_from(j.at("group_assignment").get<std::string>(), kAssignments, "group_assignment");
    }
    c.group_covariate = j.value("group_covariate", c.group_covariate);
    if (j.contains("outcome_channel")) {
      c.outcome_channel = enum_from(j.at("outcome_channel").get<std::string>(), kChannels, "outcome_channel");
    }
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  }
}

Vector simulated_coefficients(const SimConfig& cfg) {
  auto gen = rng::substream(cfg.seed, "outcome-coefficients");
  Vector beta(cfg.k);
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double u = rng::uniform01(gen);
    double acc = 0.0;
    std::size_t v = cfg.coef_probs.size() - 1;
    for (std::size_t c = 0; c < cfg.coef_probs.size(); ++c) {
      acc += cfg.coef_probs[c];
      if (u < acc) {
        v = c;
        break;
      }
    }
    beta[j] = static_cast<double>(v);
  }
  return beta;
}

SimOutput simulate_cohort(const SimConfig& cfg, std::uint64_t cohort) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const auto k = static_cast<Eigen::Index>(cfg.k);
  const auto L = cfg.cate_levels.size();
  const Vector beta = simulated_coefficients(cfg);
  const auto table = cfg.effective_compliance();
  const bool confounded = cfg.mode == SimMode::confounded;

  // Every unit consumes the same draws in every mode, so a clean and a
  // confounded cohort with the same seed share X, noise, U and Z.
  Matrix X(n, k);
  Vector eps(n), u(n), z_draw(n), a_draw(n);
  const auto unit_tag = rng::stream_tag("unit");
  const std::uint64_t cohort_seed = rng::substream_seed(cfg.seed, rng::stream_tag("cohort"), cohort);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::mt19937_64 gen(rng::substream_seed(cohort_seed, unit_tag, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < k; ++j) X(i, j) = normal(gen);
    eps[i] = normal(gen);
    u[i] = normal(gen);
    z_draw[i] = rng::uniform01(gen);
    a_draw[i] = rng::uniform01(gen);
  }

  std::vector<std::size_t> group(static_cast<std::size_t>(n));
  {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    if (cfg.group_assignment == GroupAssignment::covariate_quantile) {
      const auto gc = static_cast<Eigen::Index>(cfg.group_covariate);
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return X(static_cast<Eigen::Index>(a), gc) < X(static_cast<Eigen::Index>(b), gc);
      });
    } else {
      auto gen = rng::substream(cohort_seed, "groups");
      rng::shuffle(order.begin(), order.end(), gen);
    }
    for (std::size_t r = 0; r < order.size(); ++r) {
      group[order[r]] = r * L / static_cast<std::size_t>(n);
    }
  }

  Vector A(n), Y(n);
  GroundTruth truth;
  truth.true_cate.resize(n);
  truth.y0.resize(n);
  truth.y1.resize(n);
  truth.true_group.resize(static_cast<std::size_t>(n));
  truth.z.resize(static_cast<std::size_t>(n));
  const double z_base = logit(cfg.z_assignment_prob);
  const Vector hidden = confounded ? u : Vector::Zero(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    double pz = cfg.z_assignment_prob;
    if (!cfg.z_logit_weights.empty()) {
      double t = z_base;
      for (std::size_t j = 0; j < cfg.z_logit_weights.size(); ++j) {
        t += cfg.z_logit_weights[j] * X(i, static_cast<Eigen::Index>(j));
      }
      pz = logistic(t);
    }
    const int z = z_draw[i] < pz ? 1 : 0;

    double pa = z == 1 ? table.p_a1_given_z1 : table.p_a1_given_z0;
    if (confounded && cfg.confounder_affects_treatment) {
      pa = logistic(logit(pa) + cfg.confounder_strength * u[i]);
    }
    const int a = a_draw[i] < pa ? 1 : 0;

    const double cate = cfg.cate_levels[group[ui]];
    double y0 = X.row(i).dot(beta) + cfg.noise_sd * eps[i];
    if (confounded) y0 += cfg.confounder_strength * u[i];
    const double y1 = y0 + cate;
    const int treated = cfg.outcome_channel == OutcomeChannel::target ? z : a;

    A[i] = a;
    Y[i] = treated == 1 ? y1 : y0;
    truth.true_group[ui] = static_cast<int>(group[ui]) + 1;
    truth.true_cate[i] = cate;
    truth.y0[i] = y0;
    truth.y1[i] = y1;
    truth.z[ui] = z;
  }

  SimOutput out;
  auto oracle = Dataset::create(std::move(X), std::move(A), std::move(Y), {}, {}, std::move(truth));
  out.observed = oracle.without_ground_truth();
  out.oracle = std::move(oracle);
  out.hidden_u = hidden;
  return out;
}

std::vector<int> ground_truth_rank(const Dataset& oracle) {
  const auto& cate = oracle.ground_truth().true_cate;
  std::vector<double> distinct(cate.data(), cate.data() + cate.size());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> level(static_cast<std::size_t>(cate.size()));
  for (Eigen::Index i = 0; i < cate.size(); ++i) {
    const auto it = std::lower_bound(distinct.begin(), distinct.end(), cate[i]);
    level[static_cast<std::size_t>(i)] = static_cast<int>(it - distinct.begin()) + 1;
  }
  return level;
}

}  // namespace splitrank

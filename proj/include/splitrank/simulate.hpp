#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "splitrank/core.hpp"

namespace splitrank {

enum class SimMode { clean, confounded, negative_compliance };

/// How units are mapped onto CATE groups.
enum class GroupAssignment {
  covariate_quantile,  // equal-size groups by empirical quantiles of one covariate
  random,              // random permutation; invisible to any model of X
};

/// Which treatment the outcome responds to.
enum class OutcomeChannel {
  target,  // Y = Y^{Z}: A is only correlated with the effect through Z
  proxy,   // Y = Y^{A}: Z acts on Y only through A (exclusion restriction holds)
};

struct ComplianceTable {
  double p_a1_given_z1 = 0.995;
  double p_a1_given_z0 = 0.005;
  double lift() const { return p_a1_given_z1 - p_a1_given_z0; }
};

struct SimConfig {
  std::int64_t n = 10000;
  std::int64_t k = 50;
  std::vector<double> cate_levels = {10, 20, 30, 40};
  /// Selection probabilities of outcome coefficients 0, 1, ..., size-1.
  std::vector<double> coef_probs = {0.40, 0.30, 0.15, 0.10, 0.05};
  double noise_sd = 1.0;
  /// Unset: mode default (0.995/0.005 positive, 0.4/0.6 negative).
  std::optional<ComplianceTable> compliance;
  double z_assignment_prob = 0.5;
  /// Optional logit weights of Z on the leading covariates (empty: Z independent of X).
  std::vector<double> z_logit_weights;
  SimMode mode = SimMode::clean;
  double confounder_strength = 2.0;
  /// false reproduces the literal reading where U shifts only the outcome.
  bool confounder_affects_treatment = true;
  GroupAssignment group_assignment = GroupAssignment::covariate_quantile;
  std::int64_t group_covariate = 0;
  OutcomeChannel outcome_channel = OutcomeChannel::target;
  std::uint64_t seed = 0;

  ComplianceTable effective_compliance() const;
  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

std::string to_string(SimMode m);
SimMode sim_mode_from_string(const std::string& s);

struct SimOutput {
  Dataset observed;  // X, A, Y only
  Dataset oracle;    // same rows plus ground truth
  Vector hidden_u;   // confounder draws (zeros outside confounded mode)
};

/// Draws a cohort. Model parameters (outcome coefficients) depend only on
/// `cfg.seed`; unit draws additionally depend on `cohort`, so a campaign
/// cohort can share the world of an observational cohort.
SimOutput simulate_cohort(const SimConfig& cfg, std::uint64_t cohort = 0);

/// Outcome coefficients of the simulated world for this seed.
Vector simulated_coefficients(const SimConfig& cfg);

/// Dense ascending rank of each unit's true CATE: smallest CATE -> 1.
std::vector<int> ground_truth_rank(const Dataset& oracle);

}  // namespace splitrank

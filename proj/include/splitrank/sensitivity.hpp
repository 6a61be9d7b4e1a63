#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitrank/analysis.hpp"

namespace splitrank {

enum class PosteriorMode { literal, conjugate_corrected };

std::string to_string(PosteriorMode m);
PosteriorMode posterior_mode_from_string(const std::string& s);

/// Synthetic confounder prior N(u0 = alpha + a, epsilon) per treatment arm.
/// epsilon is a variance; larger values mean a weaker confounder.
struct ConfounderConfig {
  double alpha = 1e5;
  double epsilon = 40 * 1e5;
  PosteriorMode mode = PosteriorMode::conjugate_corrected;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ConfounderConfig& c);
void from_json(const nlohmann::json& j, ConfounderConfig& c);

/// Reference configurations reused from the real-data study.
std::vector<ConfounderConfig> default_confounder_configs();

struct ArmPosterior {
  int arm = 0;
  std::size_t n_a = 0;
  double u0 = 0.0;
  double u_star = 0.0;
  double eps_star = 0.0;  // variance
};

/// Posterior of U for one arm given that arm's outcomes.
ArmPosterior arm_posterior(int arm, std::span<const double> y_arm, double alpha, double epsilon, PosteriorMode mode);

struct ConfounderDraw {
  Vector u;
  double corr_u_a = 0.0;
  double corr_u_y = 0.0;
  std::array<ArmPosterior, 2> posterior;
};

/// Samples each unit's U from its arm's posterior. Throws DataError when an
/// arm is empty.
ConfounderDraw generate_confounder(const Dataset& d, const ConfounderConfig& cfg);

/// Pearson correlation; 0 when either side is constant.
double pearson(const Vector& x, const Vector& y);

/// Share of units strictly above the baseline median that are also strictly
/// above the median of `other`. 1 when no unit is above the baseline median.
double overlap_fraction(const Vector& baseline, const Vector& other);

struct PlaceboRecord {
  double ate_estimate = 0.0;
  double ate_se = 0.0;
  double rank_rmse_vs_original = 0.0;
  std::optional<double> rank_rmse_vs_truth;
  std::size_t fitted_units = 0;
  int bootstrap_resamples = 0;
};

/// Doubly robust ATE of `a` on the rows of `fitted`: model contrast plus
/// Hajek-normalized weighted residual corrections per arm. Bootstrap over
/// units with the nuisance fits held fixed. Empty weights mean w = 1.
struct ATEEstimate {
  double ate = 0.0;
  double se = 0.0;
};
ATEEstimate doubly_robust_ate(const OutcomeModel& m, const Dataset& fitted, std::span<const double> weights,
                              int resamples, std::uint64_t seed);

/// Replaces the treatment with Bernoulli(0.5) draws, reruns the analysis and
/// reports the ATE, its bootstrap SE, and the rank RMSE of the placebo
/// ranking against `original` and, when given, the true levels.
PlaceboRecord placebo_test(const Dataset& d, const ModelSpec& spec, const AnalysisConfig& cfg,
                           const RankedCohort& original, std::uint64_t seed, int resamples = 200,
                           std::span<const int> truth_levels = {});

struct ConfoundingRecord {
  std::size_t config_index = 0;
  int run = 0;
  double alpha = 0.0;
  double epsilon = 0.0;
  double corr_u_a = 0.0;
  double corr_u_y = 0.0;
  double overlap_fraction = 0.0;
  double rank_rmse = 0.0;  // baseline levels vs confounded-run levels
};

struct ConfoundingSummary {
  std::size_t config_index = 0;
  double alpha = 0.0;
  double epsilon = 0.0;
  int runs = 0;
  double overlap_mean = 0.0;
  double overlap_sd = 0.0;
  double rank_rmse_mean = 0.0;
  double rank_rmse_sd = 0.0;
  double corr_u_a_mean = 0.0;
  double corr_u_y_mean = 0.0;
};

/// Seed of run `run` of config `config_index`; the same for every model, so
/// models are always compared on shared confounder draws.
std::uint64_t confounder_seed(std::uint64_t master, std::size_t config_index, int run);

/// For every config and run: draw U, append it as a covariate, rerun the
/// analysis and compare against `baseline`.
std::vector<ConfoundingRecord> confounding_overlap(const Dataset& d, const ModelSpec& spec, const AnalysisConfig& cfg,
                                                   const RankedCohort& baseline,
                                                   std::span<const ConfounderConfig> configs, int runs,
                                                   std::uint64_t master_seed);

std::vector<ConfoundingSummary> summarize(std::span<const ConfoundingRecord> records);

}  // namespace splitrank

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splitrank/outcome.hpp"
#include "splitrank/propensity.hpp"
#include "splitrank/ranking.hpp"

namespace splitrank {

/// One outcome model of a run. `causal = false` fits with w = 1 on every
/// unit and skips the propensity stage.
struct ModelSpec {
  std::string name = "IPTW-LR";
  Family family = Family::linear_wls;
  Hyperparams hyperparams;
  bool causal = true;
};

void to_json(nlohmann::json& j, const ModelSpec& m);
void from_json(const nlohmann::json& j, ModelSpec& m);

/// The two models of the simulation study.
std::vector<ModelSpec> default_models();

struct AnalysisConfig {
  double trim_lo = 0.01;
  double trim_hi = 0.99;
  /// Refit the propensity model on the retained units after trimming.
  bool refit_after_trim = true;
  PropensityOptions propensity;
  int levels = 4;
  double balance_threshold = 0.2;

  void validate() const;
};

void to_json(nlohmann::json& j, const AnalysisConfig& c);
void from_json(const nlohmann::json& j, AnalysisConfig& c);

/// Propensity stage shared by all causal models of a cohort.
struct WeightingResult {
  PropensityFit initial;    // fit on every unit
  PropensityFit fit;        // fit used for weighting (retained units)
  std::vector<Index> retained;  // input rows kept by trimming, ascending
  Dataset trimmed;
  Vector weights;  // stabilized weights over `trimmed`
  BalanceReport balance;

  double mean_weight(int arm) const;
};

WeightingResult compute_weights(const Dataset& d, const AnalysisConfig& cfg);

struct AnalysisResult {
  std::optional<WeightingResult> weighting;  // absent for non-causal models
  Dataset fitted;  // rows the outcome model was trained on
  Vector fit_weights;  // empty for w = 1
  OutcomeModel model;
  ITETable ite;  // every input unit
  RankedCohort ranking;
};

/// Fits `spec` on `d` and ranks every unit of `d`. Reuses `weighting` when
/// given (it must come from the same dataset and config).
AnalysisResult run_analysis(const Dataset& d, const ModelSpec& spec, const AnalysisConfig& cfg,
                            const WeightingResult* weighting = nullptr);

}  // namespace splitrank

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splitrank/analysis.hpp"
#include "splitrank/sensitivity.hpp"
#include "splitrank/simulate.hpp"
#include "splitrank/validation.hpp"

namespace splitrank {

struct SensitivitySettings {
  bool enabled = true;
  bool placebo = true;
  std::vector<ConfounderConfig> configs = default_confounder_configs();
  int runs = 5;
  int bootstrap_resamples = 200;
};

struct ValidationSettings {
  bool enabled = true;
  double exposure = 0.661;
  /// Campaign cohort size; unset means the observational n.
  std::optional<std::int64_t> campaign_n;
  std::size_t min_arm = 50;
};

/// Everything a run needs. An empty JSON object yields the simulation study.
struct RunConfig {
  std::uint64_t master_seed = 0;
  SimConfig sim;
  std::vector<ModelSpec> models = default_models();
  AnalysisConfig analysis;
  SensitivitySettings sensitivity;
  ValidationSettings validation;
  std::vector<double> k_grid = default_k_grid();
  std::string output_dir = "splitrank-out";

  /// Throws ConfigError.
  void validate() const;
  /// Sets the master seed and the simulation seed together.
  void set_seed(std::uint64_t seed);
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys take defaults. Unknown top-level keys, an empty or null
/// model list and invalid values throw ConfigError. The simulation seed
/// follows master_seed unless given explicitly.
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// FNV-1a 64 of the canonical config JSON without output_dir, as 16 hex digits.
std::string config_hash(const RunConfig& c);

struct ModelReport {
  ModelSpec spec;
  std::string error;  // empty when the model's branch completed
  std::size_t fitted_units = 0;
  std::optional<double> rank_rmse;
  std::optional<double> spearman;
  std::optional<double> mean_weight_treated;
  std::optional<double> mean_weight_control;
  std::optional<OutcomeModel> model;
  std::optional<RankedCohort> ranking;
  std::optional<PlaceboRecord> placebo;
  std::string placebo_error;
  std::vector<ConfoundingRecord> confounding;
  std::vector<ConfoundingSummary> confounding_summary;
  std::string confounding_error;
  std::optional<IVResult> validation;
  std::string validation_error;

  bool ok() const { return error.empty(); }
};

struct RunReport {
  std::string version = SPLITRANK_VERSION;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json config;
  std::optional<SimConfig> sim;
  std::vector<int> truth_levels;  // empty without ground truth
  std::optional<BalanceReport> balance;
  std::optional<double> mean_weight_treated;
  std::optional<double> mean_weight_control;
  std::size_t n_units = 0;
  std::size_t n_retained = 0;
  std::string weighting_error;
  std::vector<ModelReport> models;

  bool any_failure() const;
};

/// Simulates the observational cohort from cfg.sim and runs every stage.
RunReport run_pipeline(const RunConfig& cfg);

/// Runs every stage on supplied data. `truth_levels` (optional) enables
/// rank RMSE. The IV stage needs a simulated world and is skipped unless
/// `sim` is given.
RunReport run_pipeline_on(const RunConfig& cfg, const Dataset& observed, std::vector<int> truth_levels,
                          const std::optional<SimConfig>& sim);

nlohmann::json to_json(const RunReport& r);

}  // namespace splitrank

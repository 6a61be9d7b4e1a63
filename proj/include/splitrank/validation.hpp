#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitrank/ranking.hpp"
#include "splitrank/simulate.hpp"

namespace splitrank {

/// A randomized campaign read as an instrumental-variable design: z is the
/// randomized exposure, a the proxy treatment actually taken.
struct IVExperiment {
  Dataset data;  // X, A, Y
  std::vector<int> z;
  Vector predicted_ite;  // filled in by the caller
  std::optional<Dataset> oracle;

  std::size_t n() const { return data.n(); }
};

/// Fresh cohort of the world described by `cfg` with z ~ Bernoulli(exposure)
/// independent of X. The outcome responds to Z only through A. Throws
/// ConfigError for exposure outside (0, 1) and EstimationError when every
/// unit lands in one instrument arm.
IVExperiment simulate_campaign(const SimConfig& cfg, double exposure = 0.661, std::uint64_t cohort = 1);

struct WaldEstimate {
  double cate = 0.0;
  double se = 0.0;
  double first_stage = 0.0;  // E[A|Z=1] - E[A|Z=0]
  double itt = 0.0;          // E[Y|Z=1] - E[Y|Z=0]
  std::size_t n = 0;
  std::size_t n_z1 = 0;
  std::size_t n_z0 = 0;
};

/// Wald ratio itt / first_stage over the rows in `group`, with a delta-method
/// SE from the four arm means and the within-arm (Y, A) covariances.
/// Throws EstimationError when an instrument arm is empty or
/// |first_stage| < min_first_stage.
WaldEstimate wald_2sls(const IVExperiment& e, std::span<const Index> group, double min_first_stage = 0.01);

struct IVRecord {
  double k = 0.0;
  std::string group;  // "high" or "low"
  std::size_t n = 0;
  double first_stage = 0.0;
  double cate = 0.0;
  double se = 0.0;
  bool separated = false;  // cate_high > cate_low at this k
  std::optional<double> true_cate_mean;
};

struct IVResult {
  std::vector<IVRecord> records;
  std::vector<std::string> notes;  // skipped thresholds

  /// Thresholds evaluated (each contributes a high and a low record).
  std::size_t evaluated() const { return records.size() / 2; }
  bool all_separated() const;
};

std::vector<double> default_k_grid();

/// For each k: the top-k percent by predicted ITE form the high group, the
/// rest the low group. Thresholds where either group has fewer than
/// `min_arm` units in some instrument arm are skipped with a note.
IVResult validate_ranking_splits(const IVExperiment& e, std::span<const double> k_grid, std::size_t min_arm = 50);

std::string format_cate_by_k_csv(const IVResult& r);

}  // namespace splitrank

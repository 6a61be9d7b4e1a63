#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splitrank/core.hpp"

namespace splitrank {

struct PropensityOptions {
  double l2 = 0.0;    // penalty on standardized coefficients
  double tol = 1e-6;  // max-norm of the mean log-likelihood gradient
  int max_iter = 500;
};

/// Score thresholds applied by trim_extremes, taken from the score
/// distribution of the data the model was fit on.
struct TrimBounds {
  double lo_q = 0.0;
  double hi_q = 1.0;
  double lo = 0.0;
  double hi = 1.0;
};

/// Logistic model P(A=1 | x) with per-unit scores for the data it was fit on.
struct PropensityFit {
  double intercept = 0.0;
  Vector coefficients;  // original covariate scale
  Vector scores;        // e(x_i), strictly inside (0, 1)
  double marginal = 0.0;  // treated fraction of the fitted rows
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  double log_likelihood = 0.0;  // mean, unpenalized
  std::optional<TrimBounds> trim;

  /// e(x) for every row of `d` under the fitted coefficients.
  Vector score(const Dataset& d) const;
};

/// L2-penalized logistic regression by full-batch gradient ascent with
/// backtracking. Covariates are standardized internally; zero-variance
/// covariates get a zero coefficient. Non-convergence sets converged=false
/// rather than throwing.
PropensityFit fit_propensity(const Dataset& d, const PropensityOptions& opts = {});

/// Drops units whose score is strictly below the lo_q-quantile or strictly
/// above the hi_q-quantile (type-7 quantiles) of the score distribution.
/// Returns the retained rows and the fit with scores restricted to them and
/// `marginal` recomputed. Thresholds come from the fitted distribution, so a
/// second call with the same quantiles removes nothing. Throws
/// EstimationError if an entire treatment arm would be removed.
std::pair<Dataset, PropensityFit> trim_extremes(const PropensityFit& fit, const Dataset& d,
                                                double lo_q = 0.01, double hi_q = 0.99);

/// Ascending row indices with lo <= score <= hi.
std::vector<Index> trim_mask(const Vector& scores, double lo, double hi);

/// w_i = a_i P(a=1) / e_i + (1 - a_i) (1 - P(a=1)) / (1 - e_i).
Vector stabilized_weights(const PropensityFit& fit, const Dataset& d);

struct CovariateBalance {
  std::string covariate;
  double smd_before = 0.0;
  double smd_after = 0.0;
  bool degenerate = false;  // zero variance in both arms
  bool flagged = false;     // smd_after > threshold
};

struct BalanceReport {
  std::vector<CovariateBalance> covariates;
  double threshold = 0.2;
  std::vector<std::string> flagged;

  double mean_before() const;
  double mean_after() const;
  /// Fraction of non-degenerate covariates with smd_after < smd_before.
  double fraction_improved() const;
};

/// |m1 - m0| / sqrt((s1^2 + s0^2) / 2), unweighted (before) and with
/// frequency-weighted means and variances (after).
BalanceReport balance_report(const Dataset& d, std::span<const double> weights, double threshold = 0.2);

/// Sample quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

std::string format_balance_csv(const BalanceReport& r);

}  // namespace splitrank

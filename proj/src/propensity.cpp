#include "splitrank/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "splitrank/error.hpp"

namespace splitrank {

namespace {

constexpr double kLogitClamp = 30.0;

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double logistic(double t) {
  t = std::clamp(t, -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-t));
}

struct Standardized {
  Matrix z;                      // n x m, active columns only
  std::vector<Eigen::Index> active;
  Vector mean;                   // per active column
  Vector sd;
};

Standardized standardize(const Matrix& x) {
  Standardized s;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).mean();
    const double v = (x.col(j).array() - m).square().sum() / n;
    if (v > 0.0) s.active.push_back(j);
  }
  const auto m = static_cast<Eigen::Index>(s.active.size());
  s.z.resize(x.rows(), m);
  s.mean.resize(m);
  s.sd.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const auto j = s.active[static_cast<std::size_t>(c)];
    const double mu = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mu).square().sum() / n);
    s.mean[c] = mu;
    s.sd[c] = sd;
    s.z.col(c) = (x.col(j).array() - mu) / sd;
  }
  return s;
}

// Mean Bernoulli log-likelihood minus the L2 penalty.
double objective(const Matrix& z, const Vector& a, double b0, const Vector& b, double l2, double* loglik) {
  const Vector t = (z * b).array() + b0;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double ti = std::clamp(t[i], -kLogitClamp, kLogitClamp);
    ll += a[i] * ti - softplus(ti);
  }
  ll /= static_cast<double>(t.size());
  if (loglik) *loglik = ll;
  return ll - 0.5 * l2 * b.squaredNorm();
}

}  // namespace

Vector PropensityFit::score(const Dataset& d) const {
  if (static_cast<Eigen::Index>(d.k()) != coefficients.size()) {
    throw DataError("propensity model expects " + std::to_string(coefficients.size()) + " covariates, got " +
                    std::to_string(d.k()));
  }
  const Vector t = (d.covariates() * coefficients).array() + intercept;
  return t.unaryExpr([](double v) { return logistic(v); });
}

PropensityFit fit_propensity(const Dataset& d, const PropensityOptions& opts) {
  if (!(opts.l2 >= 0.0)) throw ConfigError("l2 must be non-negative");
  if (!(opts.tol > 0.0)) throw ConfigError("tol must be positive");
  if (opts.max_iter < 0) throw ConfigError("max_iter must be non-negative");
  if (d.empty() || !d.both_arms_present()) throw EstimationError("no variation in treatment");

  const auto st = standardize(d.covariates());
  const Vector& a = d.treatment();
  const double n = static_cast<double>(d.n());
  const double pbar = a.mean();

  double b0 = std::log(pbar / (1.0 - pbar));
  Vector b = Vector::Zero(st.z.cols());
  double ll = 0.0;
  double f = objective(st.z, a, b0, b, opts.l2, &ll);

  auto gradient = [&](double c0, const Vector& c, double& g0, Vector& g) {
    const Vector t = (st.z * c).array() + c0;
    const Vector r = a - t.unaryExpr([](double v) { return logistic(v); });
    g0 = r.sum() / n;
    g = st.z.transpose() * r / n - opts.l2 * c;
  };

  double g0 = 0.0;
  Vector g;
  gradient(b0, b, g0, g);
  auto gnorm = [&] { return std::max(std::abs(g0), g.size() ? g.cwiseAbs().maxCoeff() : 0.0); };

  PropensityFit fit;
  double step = 4.0;
  int it = 0;
  while (gnorm() >= opts.tol && it < opts.max_iter) {
    const double sq = g0 * g0 + g.squaredNorm();
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const double c0 = b0 + step * g0;
      const Vector c = b + step * g;
      double ll_new = 0.0;
      const double f_new = objective(st.z, a, c0, c, opts.l2, &ll_new);
      if (f_new >= f + 1e-4 * step * sq) {
        b0 = c0;
        b = c;
        f = f_new;
        ll = ll_new;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++it;
    if (!accepted) break;  // no ascent direction left at machine precision
    step = std::min(step * 2.0, 1e6);
    gradient(b0, b, g0, g);
  }

  fit.iterations = it;
  fit.gradient_norm = gnorm();
  fit.converged = fit.gradient_norm < opts.tol;
  fit.log_likelihood = ll;

  fit.coefficients = Vector::Zero(static_cast<Eigen::Index>(d.k()));
  double intercept = b0;
  for (Eigen::Index c = 0; c < b.size(); ++c) {
    const auto j = st.active[static_cast<std::size_t>(c)];
    fit.coefficients[j] = b[c] / st.sd[c];
    intercept -= b[c] * st.mean[c] / st.sd[c];
  }
  fit.intercept = intercept;
  fit.scores = fit.score(d);
  fit.marginal = pbar;
  return fit;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<Index> trim_mask(const Vector& scores, double lo, double hi) {
  std::vector<Index> keep;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (scores[i] >= lo && scores[i] <= hi) keep.push_back(static_cast<Index>(i));
  }
  return keep;
}

std::pair<Dataset, PropensityFit> trim_extremes(const PropensityFit& fit, const Dataset& d, double lo_q,
                                                double hi_q) {
  if (!(lo_q >= 0.0 && lo_q < hi_q && hi_q <= 1.0)) throw ConfigError("trim quantiles need 0 <= lo_q < hi_q <= 1");
  if (static_cast<std::size_t>(fit.scores.size()) != d.n()) throw DataError("score count does not match dataset rows");

  TrimBounds bounds{lo_q, hi_q, 0.0, 1.0};
  if (fit.trim && fit.trim->lo_q == lo_q && fit.trim->hi_q == hi_q) {
    bounds = *fit.trim;
  } else {
    const std::vector<double> s(fit.scores.data(), fit.scores.data() + fit.scores.size());
    bounds.lo = quantile(s, lo_q);
    bounds.hi = quantile(s, hi_q);
  }
  const auto keep = trim_mask(fit.scores, bounds.lo, bounds.hi);
  Dataset kept = d.subset(keep);
  if (!kept.both_arms_present()) throw EstimationError("trimming would remove an entire treatment arm");

  PropensityFit out = fit;
  out.scores.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.scores[static_cast<Eigen::Index>(r)] = fit.scores[static_cast<Eigen::Index>(keep[r])];
  }
  out.marginal = kept.treatment().mean();
  out.trim = bounds;
  return {std::move(kept), std::move(out)};
}

Vector stabilized_weights(const PropensityFit& fit, const Dataset& d) {
  if (static_cast<std::size_t>(fit.scores.size()) != d.n()) throw DataError("score count does not match dataset rows");
  const double p = fit.marginal;
  Vector w(fit.scores.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double e = fit.scores[i];
    if (!(e > 0.0 && e < 1.0)) {
      throw EstimationError("propensity score outside (0, 1) at row " + std::to_string(i + 1));
    }
    const double a = d.treatment()[i];
    w[i] = a * p / e + (1.0 - a) * (1.0 - p) / (1.0 - e);
  }
  return w;
}

double BalanceReport::mean_before() const {
  if (covariates.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : covariates) s += c.smd_before;
  return s / static_cast<double>(covariates.size());
}

double BalanceReport::mean_after() const {
  if (covariates.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : covariates) s += c.smd_after;
  return s / static_cast<double>(covariates.size());
}

double BalanceReport::fraction_improved() const {
  std::size_t total = 0, better = 0;
  for (const auto& c : covariates) {
    if (c.degenerate) continue;
    ++total;
    if (c.smd_after < c.smd_before) ++better;
  }
  return total == 0 ? 1.0 : static_cast<double>(better) / static_cast<double>(total);
}

namespace {

struct ArmMoments {
  double mean = 0.0;
  double var = 0.0;
};

ArmMoments weighted_moments(const Matrix& x, Eigen::Index col, const Vector& a, double arm,
                            std::span<const double> w) {
  double sw = 0.0, sx = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (a[i] != arm) continue;
    const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
    sw += wi;
    sx += wi * x(i, col);
  }
  ArmMoments m;
  if (sw <= 0.0) return m;
  m.mean = sx / sw;
  double sv = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (a[i] != arm) continue;
    const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
    const double dx = x(i, col) - m.mean;
    sv += wi * dx * dx;
  }
  m.var = sv / sw;
  return m;
}

std::pair<double, bool> smd(const ArmMoments& t, const ArmMoments& c) {
  const double pooled = (t.var + c.var) / 2.0;
  if (pooled <= 0.0) return {0.0, true};
  return {std::abs(t.mean - c.mean) / std::sqrt(pooled), false};
}

}  // namespace

BalanceReport balance_report(const Dataset& d, std::span<const double> weights, double threshold) {
  if (weights.size() != d.n()) throw DataError("weight count does not match dataset rows");
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw DataError("balance weights must be positive and finite");
  }
  if (!d.both_arms_present()) throw EstimationError("balance needs both treatment arms");
  BalanceReport r;
  r.threshold = threshold;
  const auto& x = d.covariates();
  const auto& a = d.treatment();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    CovariateBalance c;
    c.covariate = d.covariate_names()[static_cast<std::size_t>(j)];
    const auto [before, deg_b] = smd(weighted_moments(x, j, a, 1.0, {}), weighted_moments(x, j, a, 0.0, {}));
    const auto [after, deg_a] =
        smd(weighted_moments(x, j, a, 1.0, weights), weighted_moments(x, j, a, 0.0, weights));
    c.smd_before = before;
    c.smd_after = after;
    c.degenerate = deg_b || deg_a;
    c.flagged = after > threshold;
    if (c.flagged) r.flagged.push_back(c.covariate);
    r.covariates.push_back(std::move(c));
  }
  return r;
}

std::string format_balance_csv(const BalanceReport& r) {
  std::ostringstream os;
  os << "covariate,smd_before,smd_after,flagged\n";
  for (const auto& c : r.covariates) {
    os << c.covariate << ',' << format_double(c.smd_before) << ',' << format_double(c.smd_after) << ','
       << (c.flagged ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace splitrank

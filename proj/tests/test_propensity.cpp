#include <doctest.h>

#include <cmath>
#include <random>

#include "splitrank/analysis.hpp"
#include "splitrank/error.hpp"
#include "splitrank/propensity.hpp"
#include "splitrank/simulate.hpp"

using namespace splitrank;

namespace {

double mean_loglik(const Vector& x, const Vector& a, double b0, double b1) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double eta = b0 + b1 * x[i];
    // log(1 + e^eta) computed stably
    const double soft = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    s += a[i] * eta - soft;
  }
  return s / static_cast<double>(x.size());
}

Dataset one_column(const Vector& x, const Vector& a) {
  Matrix m(x.size(), 1);
  m.col(0) = x;
  return Dataset::create(m, a, Vector::Zero(x.size()));
}

}  // namespace

TEST_CASE("fit: 4-point dataset matches a dense grid search") {
  Vector x(4), a(4);
  x << -1, 0, 1, 2;
  a << 0, 1, 0, 1;
  PropensityOptions opts;
  opts.tol = 1e-8;
  opts.max_iter = 100000;
  const auto fit = fit_propensity(one_column(x, a), opts);
  CHECK(fit.converged);

  double best = -1e300;
  for (int i = 0; i <= 1000; ++i) {
    for (int j = 0; j <= 1000; ++j) {
      const double b0 = -5.0 + 0.01 * i, b1 = -5.0 + 0.01 * j;
      best = std::max(best, mean_loglik(x, a, b0, b1));
    }
  }
  CHECK(std::abs(fit.log_likelihood - best) < 1e-3);
  CHECK(fit.log_likelihood >= best - 1e-9);
  CHECK(mean_loglik(x, a, fit.intercept, fit.coefficients[0]) == doctest::Approx(fit.log_likelihood).epsilon(1e-9));
}

TEST_CASE("fit: treatment independent of X") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution bern(0.3);
  const Eigen::Index n = 5000;
  Matrix x(n, 3);
  Vector a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = nd(gen);
    a[i] = bern(gen) ? 1.0 : 0.0;
  }
  const auto fit = fit_propensity(Dataset::create(x, a, Vector::Zero(n)));
  CHECK(fit.scores.mean() == doctest::Approx(a.mean()).epsilon(1e-3));
  // Fisher SE of a slope on a unit-variance covariate: 1/sqrt(n p (1-p)).
  const double se = 1.0 / std::sqrt(static_cast<double>(n) * 0.3 * 0.7);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(fit.coefficients[j]) < 3 * se);
}

TEST_CASE("fit: single-arm data is an error") {
  Vector x(3), a = Vector::Ones(3);
  x << 1, 2, 3;
  try {
    fit_propensity(one_column(x, a));
    FAIL("expected an error");
  } catch (const EstimationError& e) {
    CHECK(std::string(e.what()) == "no variation in treatment");
  }
}

TEST_CASE("fit: tiny L2 penalty barely moves the scores") {
  const auto d = simulate_cohort([] {
                   SimConfig c;
                   c.n = 2000;
                   c.k = 5;
                   c.mode = SimMode::confounded;
                   return c;
                 }())
                     .observed;
  const auto f0 = fit_propensity(d, {0.0, 1e-8, 5000});
  const auto f1 = fit_propensity(d, {1e-8, 1e-8, 5000});
  CHECK((f0.scores - f1.scores).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("trim: explicit quantile enumeration") {
  const Eigen::Index n = 100;
  Vector x(n), a(n), s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = static_cast<double>(i);
    a[i] = static_cast<double>(i % 2);
    s[i] = 0.01 * static_cast<double>(i + 1);
  }
  const auto d = one_column(x, a);
  PropensityFit fit;
  fit.coefficients = Vector::Zero(1);
  fit.scores = s;
  fit.marginal = 0.5;

  // Type-7 quantile at 0.05 of 0.01..1.00: h = 99 * 0.05 = 4.95, so the
  // threshold lies between the 5th and 6th order statistics.
  const double threshold = 0.05 + 0.95 * 0.01;
  CHECK(quantile(std::vector<double>(s.data(), s.data() + n), 0.05) == doctest::Approx(threshold));
  std::vector<std::int64_t> expected;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(s[i] < threshold)) expected.push_back(i);

  const auto [kept, kfit] = trim_extremes(fit, d, 0.05, 1.0);
  CHECK(kept.ids() == expected);
  CHECK(kept.n() == 95);
  CHECK(kfit.scores.size() == 95);
  CHECK(kfit.scores[0] == doctest::Approx(0.06));

  // Idempotent.
  const auto [again, afit] = trim_extremes(kfit, kept, 0.05, 1.0);
  CHECK(again.ids() == kept.ids());

  // Identical scores drop nothing.
  fit.scores = Vector::Constant(n, 0.4);
  CHECK(trim_extremes(fit, d).first.n() == static_cast<std::size_t>(n));

  CHECK_THROWS_AS(trim_extremes(fit, d, 0.5, 0.4), ConfigError);
}

TEST_CASE("trim: default quantiles retain about 98% of a continuous cohort") {
  SimConfig c;
  c.mode = SimMode::confounded;
  const auto d = simulate_cohort(c).observed;
  const auto fit = fit_propensity(d);
  const auto [kept, kfit] = trim_extremes(fit, d);
  CHECK(kept.n() >= 9790);
  CHECK(kept.n() <= 9810);

  const auto [twice, tfit] = trim_extremes(kfit, kept);
  CHECK(twice.n() == kept.n());
}

TEST_CASE("stabilized weights") {
  Vector x(2), a(2);
  x << 0, 1;
  a << 1, 0;
  const auto d = one_column(x, a);
  PropensityFit fit;
  fit.coefficients = Vector::Zero(1);
  fit.marginal = 0.5;
  fit.scores = Vector(2);
  fit.scores << 0.25, 0.5;
  const auto w = stabilized_weights(fit, d);
  CHECK(w[0] == doctest::Approx(2.0));
  CHECK(w[1] == doctest::Approx(1.0));

  fit.scores = Vector::Constant(2, 0.5);
  CHECK(stabilized_weights(fit, d) == Vector::Ones(2));

  fit.scores[0] = 1.0;
  CHECK_THROWS_AS(stabilized_weights(fit, d), EstimationError);
}

TEST_CASE("weights average one per arm and balance improves on confounded cohorts") {
  for (std::uint64_t seed : {1u, 2u}) {
    SimConfig c;
    c.mode = SimMode::confounded;
    c.seed = seed;
    const auto d = simulate_cohort(c).observed;
    const auto wr = compute_weights(d, AnalysisConfig{});
    CHECK(wr.mean_weight(1) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(wr.mean_weight(0) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(wr.balance.mean_after() < wr.balance.mean_before());
    CHECK(wr.balance.fraction_improved() >= 0.9);
  }
}

TEST_CASE("balance: hand-computed SMDs") {
  // Treated {0, 2}, control {-1, 1}: means 1 and 0, both sds 1.
  Vector x(4), a(4);
  x << 0, 2, -1, 1;
  a << 1, 1, 0, 0;
  const std::vector<double> w(4, 1.0);
  const auto r = balance_report(one_column(x, a), w);
  CHECK(r.covariates[0].smd_before == doctest::Approx(1.0));
  CHECK(r.covariates[0].smd_after == doctest::Approx(1.0));
  CHECK(r.flagged.size() == 1);

  // Identical arm distributions.
  x << 0, 2, 0, 2;
  CHECK(balance_report(one_column(x, a), w).covariates[0].smd_before == 0.0);

  // Zero variance everywhere.
  x = Vector::Constant(4, 3.0);
  const auto deg = balance_report(one_column(x, a), w);
  CHECK(deg.covariates[0].degenerate);
  CHECK(deg.covariates[0].smd_after == 0.0);

  const std::vector<double> bad = {1, 1, 0, 1};
  CHECK_THROWS_AS(balance_report(one_column(x, a), bad), DataError);
}

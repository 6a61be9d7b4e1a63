#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "splitrank/error.hpp"
#include "splitrank/validation.hpp"

using namespace splitrank;

namespace {

// Y = noise + effect * A, with A drawn from the given compliance table.
IVExperiment manual_experiment(Eigen::Index n, double p1, double p0, double effect, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u;
  IVExperiment e;
  Matrix x(n, 1);
  Vector a(n), y(n);
  e.z.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = nd(gen);
    const int z = u(gen) < 0.5 ? 1 : 0;
    e.z[static_cast<std::size_t>(i)] = z;
    a[i] = u(gen) < (z ? p1 : p0) ? 1.0 : 0.0;
    y[i] = 5 + x(i, 0) + nd(gen) + effect * a[i];
  }
  e.data = Dataset::create(x, a, y);
  return e;
}

std::vector<Index> all_rows(std::size_t n) {
  std::vector<Index> r(n);
  std::iota(r.begin(), r.end(), Index{0});
  return r;
}

}  // namespace

TEST_CASE("campaign: exposure, compliance and errors") {
  const SimConfig cfg;
  const auto e = simulate_campaign(cfg);
  const double n = static_cast<double>(e.n());
  double exposed = 0, a1 = 0, a0 = 0;
  for (std::size_t i = 0; i < e.n(); ++i) {
    exposed += e.z[i];
    (e.z[i] ? a1 : a0) += e.data.treatment()[static_cast<Eigen::Index>(i)];
  }
  const double se = std::sqrt(0.661 * 0.339 / n);
  CHECK(std::abs(exposed / n - 0.661) < 3 * se);
  const double lift = a1 / exposed - a0 / (n - exposed);
  CHECK(std::abs(lift - cfg.effective_compliance().lift()) < 0.01);
  CHECK_FALSE(e.data.has_ground_truth());
  REQUIRE(e.oracle.has_value());

  SimConfig tiny;
  tiny.n = 10;
  tiny.k = 2;
  try {
    simulate_campaign(tiny, 1.0 - 1e-12);
    FAIL("expected an error");
  } catch (const EstimationError& err) {
    CHECK(std::string(err.what()) == "single-arm instrument");
  }
  CHECK_THROWS_AS(simulate_campaign(cfg, 1.0), ConfigError);
  CHECK_THROWS_AS(simulate_campaign(cfg, 0.0), ConfigError);
}

TEST_CASE("wald: perfect compliance is the difference in means") {
  auto e = manual_experiment(4000, 1.0, 0.0, 7.0, 1);
  const auto rows = all_rows(e.n());
  const auto w = wald_2sls(e, rows);
  CHECK(w.first_stage == 1.0);
  CHECK(w.cate == doctest::Approx(w.itt).epsilon(1e-14));
  double s[2] = {0, 0}, c[2] = {0, 0};
  for (std::size_t i = 0; i < e.n(); ++i) {
    s[e.z[i]] += e.data.outcome()[static_cast<Eigen::Index>(i)];
    c[e.z[i]] += 1;
  }
  CHECK(w.cate == doctest::Approx(s[1] / c[1] - s[0] / c[0]));
  CHECK(w.n == e.n());
  CHECK(w.n_z1 + w.n_z0 == e.n());
}

TEST_CASE("wald: compliance 0.5 halves the ITT but not the ratio") {
  const auto e = manual_experiment(20000, 0.75, 0.25, 30.0, 2);
  const auto w = wald_2sls(e, all_rows(e.n()));
  CHECK(w.first_stage == doctest::Approx(0.5).epsilon(0.05));
  CHECK(std::abs(w.itt - 15.0) < 1.0);
  CHECK(std::abs(w.cate - 30.0) < 3 * w.se);
}

TEST_CASE("wald: independent A is a weak instrument") {
  IVExperiment e;
  const Eigen::Index n = 400;
  Vector a(n), y(n);
  e.z.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    e.z[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    a[i] = static_cast<double>((i / 2) % 2);  // half treated in each z arm
    y[i] = static_cast<double>(i);
  }
  e.data = Dataset::create(Matrix::Zero(n, 1), a, y);
  try {
    wald_2sls(e, all_rows(e.n()));
    FAIL("expected an error");
  } catch (const EstimationError& err) {
    CHECK(std::string(err.what()).find("weak instrument") == 0);
  }
}

TEST_CASE("wald: scaling outcomes scales cate and se") {
  auto e = manual_experiment(5000, 0.8, 0.2, 4.0, 3);
  const auto rows = all_rows(e.n());
  const auto w = wald_2sls(e, rows);
  IVExperiment s = e;
  s.data = e.data.with_outcome(e.data.outcome() * 3.0);
  const auto ws = wald_2sls(s, rows);
  CHECK(ws.cate == doctest::Approx(3 * w.cate));
  CHECK(ws.se == doctest::Approx(3 * w.se));
  // ITT equals the numerator of the ratio.
  CHECK(w.cate * w.first_stage == doctest::Approx(w.itt));
}

TEST_CASE("ranking splits: oracle predictor on the default campaign") {
  auto e = simulate_campaign(SimConfig{});
  e.predicted_ite = e.oracle->ground_truth().true_cate;
  const auto r = validate_ranking_splits(e, default_k_grid());
  CHECK(r.records.size() == 18);
  CHECK(r.evaluated() == 9);
  CHECK(r.notes.empty());
  CHECK(r.all_separated());

  double prev = 1e300;
  for (const auto& rec : r.records) {
    REQUIRE(rec.true_cate_mean.has_value());
    if (rec.group != "high") continue;
    CHECK(*rec.true_cate_mean <= prev + 1e-12);
    prev = *rec.true_cate_mean;
    CHECK(std::abs(rec.cate - *rec.true_cate_mean) < 3 * rec.se);
  }

  // Scaling the outcome leaves separation flags unchanged.
  IVExperiment s = e;
  s.data = e.data.with_outcome(e.data.outcome() * 2.5);
  const auto rs = validate_ranking_splits(s, default_k_grid());
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    CHECK(rs.records[i].separated == r.records[i].separated);
    CHECK(rs.records[i].cate == doctest::Approx(2.5 * r.records[i].cate));
  }

  const auto csv = format_cate_by_k_csv(r);
  CHECK(csv.rfind("k,group,n,first_stage,cate,se,separated", 0) == 0);
}

TEST_CASE("ranking splits: random predictor is uninformative") {
  auto e = simulate_campaign(SimConfig{});
  std::mt19937_64 gen(21);
  std::normal_distribution<double> nd;
  e.predicted_ite.resize(static_cast<Eigen::Index>(e.n()));
  for (Eigen::Index i = 0; i < e.predicted_ite.size(); ++i) e.predicted_ite[i] = nd(gen);
  const auto r = validate_ranking_splits(e, default_k_grid());
  REQUIRE(r.evaluated() == 9);
  int within = 0;
  for (std::size_t i = 0; i < r.records.size(); i += 2) {
    const auto& h = r.records[i];
    const auto& l = r.records[i + 1];
    if (std::abs(h.cate - l.cate) <= 2 * std::hypot(h.se, l.se)) ++within;
  }
  CHECK(within >= 6);
}

TEST_CASE("ranking splits: small groups are skipped with a note") {
  SimConfig c;
  c.n = 600;
  c.k = 5;
  auto e = simulate_campaign(c);
  e.predicted_ite = e.oracle->ground_truth().true_cate;
  const auto r = validate_ranking_splits(e, default_k_grid());
  CHECK(r.evaluated() < 9);
  CHECK(r.notes.size() + r.evaluated() == 9);

  e.predicted_ite = Vector();
  CHECK_THROWS_AS(validate_ranking_splits(e, default_k_grid()), DataError);
}

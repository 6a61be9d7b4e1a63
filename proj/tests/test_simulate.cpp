#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "splitrank/error.hpp"
#include "splitrank/sensitivity.hpp"
#include "splitrank/simulate.hpp"

using namespace splitrank;

namespace {

SimConfig small(SimMode mode = SimMode::clean, std::uint64_t seed = 3) {
  SimConfig c;
  c.n = 4000;
  c.k = 10;
  c.mode = mode;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("default cohort: shape, group sizes and CATE levels") {
  const SimConfig c;
  const auto out = simulate_cohort(c);
  CHECK(out.observed.n() == 10000);
  CHECK(out.observed.k() == 50);
  CHECK_FALSE(out.observed.has_ground_truth());
  const auto& t = out.oracle.ground_truth();
  std::map<int, int> sizes;
  std::set<double> cates;
  for (std::size_t i = 0; i < t.true_group.size(); ++i) {
    ++sizes[t.true_group[i]];
    cates.insert(t.true_cate[static_cast<Eigen::Index>(i)]);
  }
  CHECK(sizes.size() == 4);
  for (const auto& [g, s] : sizes) CHECK(s == 2500);
  CHECK(cates == std::set<double>{10, 20, 30, 40});
  CHECK(out.observed.covariates() == out.oracle.covariates());
  CHECK(out.observed.outcome() == out.oracle.outcome());
  CHECK(out.observed.treatment() == out.oracle.treatment());
}

TEST_CASE("zero CATE levels give y1 == y0") {
  auto c = small();
  c.cate_levels = {0, 0, 0, 0};
  const auto t = simulate_cohort(c).oracle.ground_truth();
  CHECK(t.y1 == t.y0);
}

TEST_CASE("clean mode: per-group Z contrast matches the CATE") {
  auto c = small();
  c.n = 20000;
  const auto out = simulate_cohort(c);
  const auto& t = out.oracle.ground_truth();
  const auto& y = out.oracle.outcome();
  for (int g = 1; g <= 4; ++g) {
    double s[2] = {0, 0}, ss[2] = {0, 0}, n[2] = {0, 0};
    for (std::size_t i = 0; i < t.z.size(); ++i) {
      if (t.true_group[i] != g) continue;
      const double v = y[static_cast<Eigen::Index>(i)];
      s[t.z[i]] += v;
      ss[t.z[i]] += v * v;
      n[t.z[i]] += 1;
    }
    const double m1 = s[1] / n[1], m0 = s[0] / n[0];
    const double se = std::sqrt((ss[1] / n[1] - m1 * m1) / n[1] + (ss[0] / n[0] - m0 * m0) / n[0]);
    CHECK(std::abs((m1 - m0) - c.cate_levels[static_cast<std::size_t>(g - 1)]) < 3.0 * se);
  }
  // The potential outcomes themselves differ by exactly the CATE.
  CHECK((t.y1 - t.y0 - t.true_cate).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("ground-truth rank") {
  const auto out = simulate_cohort(SimConfig{});
  const auto lv = ground_truth_rank(out.oracle);
  const auto& t = out.oracle.ground_truth();
  std::map<int, int> counts;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    CHECK(lv[i] == static_cast<int>(t.true_cate[static_cast<Eigen::Index>(i)] / 10.0));
    ++counts[lv[i]];
  }
  for (const auto& [level, count] : counts) CHECK(count == 2500);

  auto c = small();
  c.cate_levels = {5, 5, 5, 5};
  for (int v : ground_truth_rank(simulate_cohort(c).oracle)) CHECK(v == 1);

  CHECK_THROWS_AS(ground_truth_rank(out.observed), DataError);
}

TEST_CASE("empirical compliance lift matches the table") {
  for (auto mode : {SimMode::clean, SimMode::negative_compliance}) {
    auto c = small(mode);
    c.n = 20000;
    const auto out = simulate_cohort(c);
    const auto& z = out.oracle.ground_truth().z;
    const auto& a = out.oracle.treatment();
    double n1 = 0, n0 = 0, a1 = 0, a0 = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      (z[i] ? n1 : n0) += 1;
      (z[i] ? a1 : a0) += a[static_cast<Eigen::Index>(i)];
    }
    const double p1 = a1 / n1, p0 = a0 / n0;
    const auto table = c.effective_compliance();
    const double se = std::sqrt(table.p_a1_given_z1 * (1 - table.p_a1_given_z1) / n1 +
                                table.p_a1_given_z0 * (1 - table.p_a1_given_z0) / n0);
    CHECK(std::abs((p1 - p0) - table.lift()) < 3 * se);
    if (mode == SimMode::negative_compliance) CHECK(p1 < p0);
  }
}

TEST_CASE("confounded mode: hidden U correlates with both Y and A") {
  const auto out = simulate_cohort(small(SimMode::confounded));
  CHECK(std::abs(pearson(out.hidden_u, out.oracle.outcome())) > 0.05);
  CHECK(std::abs(pearson(out.hidden_u, out.oracle.treatment())) > 0.05);
  CHECK(out.observed.k() == 10);  // U stays hidden
}

TEST_CASE("same seed gives bit-identical output; a new seed does not") {
  const auto a = simulate_cohort(small());
  const auto b = simulate_cohort(small());
  CHECK(a.oracle.covariates() == b.oracle.covariates());
  CHECK(a.oracle.outcome() == b.oracle.outcome());
  CHECK(a.oracle.treatment() == b.oracle.treatment());
  const auto c = simulate_cohort(small(SimMode::clean, 4));
  CHECK(c.oracle.outcome() != a.oracle.outcome());
}

TEST_CASE("invalid configs are rejected") {
  auto c = small();
  c.n = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.compliance = ComplianceTable{0.3, 0.8};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small(SimMode::negative_compliance);
  c.compliance = ComplianceTable{0.8, 0.3};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.z_assignment_prob = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  nlohmann::json j = SimConfig{};
  CHECK(j.get<SimConfig>().n == 10000);
  CHECK_THROWS_AS(nlohmann::json({{"mode", "bogus"}}).get<SimConfig>(), ConfigError);
}

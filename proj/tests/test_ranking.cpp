#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "splitrank/error.hpp"
#include "splitrank/ranking.hpp"

using namespace splitrank;

namespace {

Vector random_ite(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(gen);
  return v;
}

}  // namespace

TEST_CASE("bucket sizes and orientation") {
  const auto r = rank_and_bucket(random_ite(10000, 1));
  std::vector<int> counts(5, 0);
  for (int l : r.level) ++counts[static_cast<std::size_t>(l)];
  CHECK(counts == std::vector<int>{0, 2500, 2500, 2500, 2500});

  // rank is a permutation of 1..n, level L holds the largest ITEs.
  std::set<Index> ranks(r.rank.begin(), r.rank.end());
  CHECK(ranks.size() == 10000);
  CHECK(*ranks.begin() == 1);
  CHECK(*ranks.rbegin() == 10000);
  const Index top = r.order.front();
  CHECK(r.ite[top] == r.ite.maxCoeff());
  CHECK(r.level[static_cast<std::size_t>(top)] == 4);
  CHECK(r.rank[static_cast<std::size_t>(top)] == 1);

  Vector four(4);
  four << 0.3, -1, 7, 2;
  CHECK(rank_and_bucket(four).level == std::vector<int>{2, 1, 4, 3});

  // 10 units in 4 buckets: lower levels absorb the remainder (3, 3, 2, 2).
  Vector ten = Vector::LinSpaced(10, 0, 9);
  CHECK(rank_and_bucket(ten).level == std::vector<int>{1, 1, 1, 2, 2, 2, 3, 3, 4, 4});

  CHECK_THROWS_AS(rank_and_bucket(Vector::Zero(3)), DataError);
}

TEST_CASE("ties are broken by row position, deterministically") {
  Vector v(8);
  v << 1, 1, 1, 1, 1, 1, 0, 2;
  const auto a = rank_and_bucket(v);
  const auto b = rank_and_bucket(v);
  CHECK(a.level == b.level);
  CHECK(a.rank == b.rank);
  CHECK(a.rank == std::vector<Index>{2, 3, 4, 5, 6, 7, 8, 1});
  CHECK(a.level == std::vector<int>{4, 3, 3, 2, 2, 1, 1, 4});
}

TEST_CASE("rank RMSE") {
  const std::vector<int> truth = {1, 2, 3, 4};
  CHECK(rank_rmse(truth, truth) == 0.0);
  const std::vector<int> reversed = {4, 3, 2, 1};
  CHECK(rank_rmse(reversed, truth) == doctest::Approx(std::sqrt(5.0)));

  // Symmetric under exchanging the arguments.
  const std::vector<int> p = {1, 1, 3, 4, 2}, q = {2, 4, 4, 1, 2};
  CHECK(rank_rmse(p, q) == rank_rmse(q, p));

  const std::vector<int> shorter = {1, 2};
  CHECK_THROWS_AS(rank_rmse(shorter, truth), DataError);
}

TEST_CASE("top percentile selection") {
  const auto r = rank_and_bucket(random_ite(10000, 2));
  const auto all = select_top_percentile(r, 100);
  CHECK(all.size() == 10000);

  const auto half = select_top_percentile(r, 50);
  CHECK(half.size() == 5000);
  for (Index i : half) CHECK(r.rank[static_cast<std::size_t>(i)] <= 5000);

  CHECK(top_count(10000, 10) == 1000);
  CHECK(top_count(7, 50) == 4);
  CHECK(top_count(3, 100.0 / 3.0) == 1);
  CHECK_THROWS_AS(select_top_percentile(r, 0), ConfigError);
  CHECK_THROWS_AS(select_top_percentile(r, 101), ConfigError);
}

TEST_CASE("top percentile sets are nested") {
  const auto r = rank_and_bucket(random_ite(997, 3));
  std::vector<Index> prev;
  for (double k = 5; k <= 100; k += 5) {
    auto cur = select_top_percentile(r, k);
    std::vector<Index> a = prev, b = cur;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    prev = std::move(cur);
  }
}

TEST_CASE("ranking is invariant to strictly increasing transforms") {
  const Vector v = random_ite(1001, 4);
  const Vector t = (v.array() * 0.5).exp() * 3.0 + 1.0;
  const auto a = rank_and_bucket(v), b = rank_and_bucket(t);
  CHECK(a.rank == b.rank);
  CHECK(a.level == b.level);
  CHECK(select_top_percentile(a, 30) == select_top_percentile(b, 30));
}

TEST_CASE("spearman") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> y = {10, 20, 30, 40, 50};
  const std::vector<double> z = {5, 4, 3, 2, 1};
  const std::vector<double> c = {2, 2, 2, 2, 2};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  CHECK(spearman(x, z) == doctest::Approx(-1.0));
  CHECK(spearman(x, c) == 0.0);
  // Average ranks for ties: {1, 2.5, 2.5, 4} vs {1, 2, 3, 4}.
  const std::vector<double> t = {1, 2, 2, 4};
  const std::vector<double> u = {1, 2, 3, 4};
  CHECK(spearman(t, u) == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
}

TEST_CASE("ranking csv has one indicator column per k") {
  Vector v(4);
  v << 0.1, 0.4, 0.3, 0.2;
  const std::vector<double> ks = {25, 50};
  const auto csv = format_ranking_csv(rank_and_bucket(v), ks);
  CHECK(csv.substr(0, csv.find('\n')) == "index,id,ite,rank,level,top_25,top_50");
  CHECK(csv.find("\n1,1,0.4,1,4,1,1\n") != std::string::npos);
}

#include "splitrank/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "splitrank/error.hpp"

namespace splitrank {

RankedCohort rank_and_bucket(const Vector& ite, int levels) {
  const auto n = static_cast<std::size_t>(ite.size());
  if (levels < 1) throw ConfigError("bucket count must be at least 1");
  if (n < static_cast<std::size_t>(levels)) {
    throw DataError("cannot form " + std::to_string(levels) + " buckets from " + std::to_string(n) + " units");
  }
  for (Eigen::Index i = 0; i < ite.size(); ++i) {
    if (!std::isfinite(ite[i])) throw DataError("non-finite ITE at row " + std::to_string(i + 1));
  }
  RankedCohort r;
  r.ite = ite;
  r.levels = levels;
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), Index{0});
  std::stable_sort(r.order.begin(), r.order.end(), [&](Index a, Index b) {
    return ite[static_cast<Eigen::Index>(a)] > ite[static_cast<Eigen::Index>(b)];
  });
  r.rank.resize(n);
  r.level.resize(n);
  const auto L = static_cast<std::size_t>(levels);
  const std::size_t base = n / L;
  const std::size_t extra = n % L;
  // Bucket sizes from level 1 upward: the first `extra` levels get one more.
  std::vector<std::size_t> size_of(L + 1);
  for (std::size_t lv = 1; lv <= L; ++lv) size_of[lv] = base + (lv <= extra ? 1 : 0);
  std::size_t pos = 0;
  for (std::size_t lv = L; lv >= 1; --lv) {
    for (std::size_t c = 0; c < size_of[lv]; ++c, ++pos) {
      const auto row = r.order[pos];
      r.rank[row] = pos + 1;
      r.level[row] = static_cast<int>(lv);
    }
  }
  return r;
}

RankedCohort rank_and_bucket(const ITETable& ites, int levels) {
  auto r = rank_and_bucket(ites.ite, levels);
  r.ids = ites.ids;
  return r;
}

double rank_rmse(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw DataError("rank_rmse: length mismatch " + std::to_string(predicted.size()) + " vs " +
                    std::to_string(truth.size()));
  }
  if (predicted.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

double rank_rmse(const RankedCohort& predicted, std::span<const int> truth) {
  return rank_rmse(std::span<const int>(predicted.level), truth);
}

std::size_t top_count(std::size_t n, double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw ConfigError("top percentile k must be in (0, 100]");
  // The small slack keeps k = 10 on n = 10000 at 1000 despite rounding in n k / 100.
  const auto c = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * k_percent / 100.0 - 1e-9));
  return std::min(c, n);
}

std::vector<Index> select_top_percentile(const RankedCohort& ranked, double k_percent) {
  const auto c = top_count(ranked.size(), k_percent);
  return {ranked.order.begin(), ranked.order.begin() + static_cast<std::ptrdiff_t>(c)};
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) r[idx[q]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string format_ranking_csv(const RankedCohort& r, std::span<const double> k_grid) {
  std::vector<std::size_t> cut;
  std::ostringstream out;
  out << "index,id,ite,rank,level";
  for (double k : k_grid) {
    out << ",top_" << format_double(k);
    cut.push_back(top_count(r.size(), k));
  }
  out << '\n';
  for (std::size_t i = 0; i < r.size(); ++i) {
    out << i << ',' << (r.ids.empty() ? static_cast<std::int64_t>(i) : r.ids[i]) << ','
        << format_double(r.ite[static_cast<Eigen::Index>(i)]) << ',' << r.rank[i] << ',' << r.level[i];
    for (auto c : cut) out << ',' << (r.rank[i] <= c ? 1 : 0);
    out << '\n';
  }
  return out.str();
}

}  // namespace splitrank

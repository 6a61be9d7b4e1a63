#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splitrank/outcome.hpp"

namespace splitrank {

/// Units ordered by estimated ITE. Vectors are indexed by the row position
/// of the ITE table, not by rank.
struct RankedCohort {
  std::vector<std::int64_t> ids;
  Vector ite;
  std::vector<Index> rank;  // 1 = highest ITE
  std::vector<int> level;   // 1 = lowest bucket, L = highest
  int levels = 4;
  std::vector<Index> order;  // row positions sorted by rank

  std::size_t size() const { return rank.size(); }
};

/// Descending ITE with ties broken by ascending row position, then L
/// contiguous buckets of sizes differing by at most one. When L does not
/// divide n the lower levels get the extra units.
RankedCohort rank_and_bucket(const ITETable& ites, int levels = 4);
RankedCohort rank_and_bucket(const Vector& ite, int levels = 4);

/// sqrt(mean((predicted - truth)^2)) over per-unit levels.
double rank_rmse(std::span<const int> predicted, std::span<const int> truth);
double rank_rmse(const RankedCohort& predicted, std::span<const int> truth);

/// Row positions of the ceil(n k / 100) top-ranked units, in rank order.
std::vector<Index> select_top_percentile(const RankedCohort& ranked, double k_percent);

/// Number of units selected by select_top_percentile for a cohort of size n.
std::size_t top_count(std::size_t n, double k_percent);

/// Spearman rank correlation with average ranks for ties. 0 when either
/// side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// ranking.csv body: index, id, ite, rank, level and one 0/1 column per k.
std::string format_ranking_csv(const RankedCohort& r, std::span<const double> k_grid);

}  // namespace splitrank

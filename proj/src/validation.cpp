#include "splitrank/validation.hpp"

#include <cmath>
#include <sstream>

#include "splitrank/error.hpp"

namespace splitrank {

IVExperiment simulate_campaign(const SimConfig& cfg, double exposure, std::uint64_t cohort) {
  if (!(exposure > 0.0 && exposure < 1.0)) throw ConfigError("campaign exposure must be in (0, 1)");
  SimConfig c = cfg;
  c.z_assignment_prob = exposure;
  c.z_logit_weights.clear();
  c.outcome_channel = OutcomeChannel::proxy;
  const auto sim = simulate_cohort(c, cohort);

  IVExperiment e;
  e.data = sim.observed;
  e.z = sim.oracle.ground_truth().z;
  e.oracle = sim.oracle;
  std::size_t exposed = 0;
  for (int v : e.z) exposed += static_cast<std::size_t>(v);
  if (exposed == 0 || exposed == e.z.size()) throw EstimationError("single-arm instrument");
  return e;
}

WaldEstimate wald_2sls(const IVExperiment& e, std::span<const Index> group, double min_first_stage) {
  if (e.z.size() != e.n()) throw DataError("instrument length does not match dataset");
  const auto& a = e.data.treatment();
  const auto& y = e.data.outcome();
  // Per instrument arm: count, sums of y, a, y^2, a^2, y*a.
  double cnt[2] = {0, 0}, sy[2] = {0, 0}, sa[2] = {0, 0}, syy[2] = {0, 0}, saa[2] = {0, 0}, sya[2] = {0, 0};
  for (Index row : group) {
    if (row >= e.n()) throw DataError("group row out of range");
    const int z = e.z[row];
    const auto i = static_cast<Eigen::Index>(row);
    cnt[z] += 1;
    sy[z] += y[i];
    sa[z] += a[i];
    syy[z] += y[i] * y[i];
    saa[z] += a[i] * a[i];
    sya[z] += y[i] * a[i];
  }
  if (cnt[0] < 2 || cnt[1] < 2) throw EstimationError("group needs at least two units in each instrument arm");

  double my[2], ma[2], vy[2], va[2], cya[2];
  for (int z = 0; z < 2; ++z) {
    my[z] = sy[z] / cnt[z];
    ma[z] = sa[z] / cnt[z];
    vy[z] = (syy[z] - cnt[z] * my[z] * my[z]) / (cnt[z] - 1);
    va[z] = (saa[z] - cnt[z] * ma[z] * ma[z]) / (cnt[z] - 1);
    cya[z] = (sya[z] - cnt[z] * my[z] * ma[z]) / (cnt[z] - 1);
  }
  WaldEstimate w;
  w.n = group.size();
  w.n_z1 = static_cast<std::size_t>(cnt[1]);
  w.n_z0 = static_cast<std::size_t>(cnt[0]);
  w.itt = my[1] - my[0];
  w.first_stage = ma[1] - ma[0];
  if (std::abs(w.first_stage) < min_first_stage) {
    throw EstimationError("weak instrument: first stage " + format_double(w.first_stage));
  }
  w.cate = w.itt / w.first_stage;
  const double var_itt = vy[1] / cnt[1] + vy[0] / cnt[0];
  const double var_fs = va[1] / cnt[1] + va[0] / cnt[0];
  const double cov = cya[1] / cnt[1] + cya[0] / cnt[0];
  const double var = (var_itt - 2.0 * w.cate * cov + w.cate * w.cate * var_fs) / (w.first_stage * w.first_stage);
  w.se = std::sqrt(std::max(0.0, var));
  return w;
}

bool IVResult::all_separated() const {
  if (records.empty()) return false;
  for (const auto& r : records) {
    if (!r.separated) return false;
  }
  return true;
}

std::vector<double> default_k_grid() { return {10, 20, 30, 40, 50, 60, 70, 80, 90}; }

IVResult validate_ranking_splits(const IVExperiment& e, std::span<const double> k_grid, std::size_t min_arm) {
  if (static_cast<std::size_t>(e.predicted_ite.size()) != e.n()) {
    throw DataError("predicted ITE missing for some campaign units");
  }
  const auto ranked = rank_and_bucket(e.predicted_ite, 1);
  const Vector* truth = e.oracle && e.oracle->has_ground_truth() ? &e.oracle->ground_truth().true_cate : nullptr;

  IVResult out;
  for (double k : k_grid) {
    const auto high = select_top_percentile(ranked, k);
    std::vector<Index> low(ranked.order.begin() + static_cast<std::ptrdiff_t>(high.size()), ranked.order.end());
    const auto arm_sizes = [&](const std::vector<Index>& g) {
      std::size_t n1 = 0;
      for (auto r : g) n1 += static_cast<std::size_t>(e.z[r]);
      return std::pair{g.size() - n1, n1};
    };
    const auto [h0, h1] = arm_sizes(high);
    const auto [l0, l1] = arm_sizes(low);
    if (std::min({h0, h1, l0, l1}) < min_arm) {
      out.notes.push_back("k=" + format_double(k) + " skipped: fewer than " + std::to_string(min_arm) +
                          " units in an instrument arm");
      continue;
    }
    WaldEstimate wh, wl;
    try {
      wh = wald_2sls(e, high);
      wl = wald_2sls(e, low);
    } catch (const EstimationError& err) {
      out.notes.push_back("k=" + format_double(k) + " skipped: " + err.what());
      continue;
    }
    const bool sep = wh.cate > wl.cate;
    const auto mean_truth = [&](const std::vector<Index>& g) -> std::optional<double> {
      if (!truth) return std::nullopt;
      double s = 0.0;
      for (auto r : g) s += (*truth)[static_cast<Eigen::Index>(r)];
      return s / static_cast<double>(g.size());
    };
    out.records.push_back({k, "high", wh.n, wh.first_stage, wh.cate, wh.se, sep, mean_truth(high)});
    out.records.push_back({k, "low", wl.n, wl.first_stage, wl.cate, wl.se, sep, mean_truth(low)});
  }
  return out;
}

std::string format_cate_by_k_csv(const IVResult& r) {
  std::ostringstream out;
  out << "k,group,n,first_stage,cate,se,separated\n";
  for (const auto& rec : r.records) {
    out << format_double(rec.k) << ',' << rec.group << ',' << rec.n << ',' << format_double(rec.first_stage) << ','
        << format_double(rec.cate) << ',' << format_double(rec.se) << ',' << (rec.separated ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace splitrank

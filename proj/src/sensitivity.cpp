#include "splitrank/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "splitrank/error.hpp"
#include "splitrank/rng.hpp"

namespace splitrank {

std::string to_string(PosteriorMode m) {
  return m == PosteriorMode::literal ? "literal" : "conjugate_corrected";
}

PosteriorMode posterior_mode_from_string(const std::string& s) {
  if (s == "literal") return PosteriorMode::literal;
  if (s == "conjugate_corrected") return PosteriorMode::conjugate_corrected;
  throw ConfigError("unknown posterior_mode '" + s + "'");
}

void ConfounderConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("confounder epsilon must be positive");
  if (!std::isfinite(alpha)) throw ConfigError("confounder alpha must be finite");
}

void to_json(nlohmann::json& j, const ConfounderConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha}, {"epsilon", c.epsilon}, {"posterior_mode", to_string(c.mode)}};
}

void from_json(const nlohmann::json& j, ConfounderConfig& c) {
  c = ConfounderConfig{};
  if (!j.is_object()) throw ConfigError("confounder config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "alpha" && key != "epsilon" && key != "epsilon_over_alpha" && key != "posterior_mode") {
      throw ConfigError("unknown key '" + key + "' in confounder config");
    }
  }
  try {
    c.alpha = j.value("alpha", c.alpha);
    // "epsilon_over_alpha" mirrors how the reference configurations are quoted.
    if (j.contains("epsilon_over_alpha")) {
      c.epsilon = j.at("epsilon_over_alpha").get<double>() * c.alpha;
    } else {
      c.epsilon = j.value("epsilon", 40.0 * c.alpha);
    }
    if (j.contains("posterior_mode")) c.mode = posterior_mode_from_string(j.at("posterior_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("confounder config: ") + e.what());
  }
  c.validate();
}

std::vector<ConfounderConfig> default_confounder_configs() {
  std::vector<ConfounderConfig> out(3);
  out[0].alpha = 1e5;
  out[0].epsilon = 40 * 1e5;
  out[1].alpha = 1e5;
  out[1].epsilon = 100 * 1e5;
  out[2].alpha = 1e3;
  out[2].epsilon = 1700 * 1e3;
  return out;
}

ArmPosterior arm_posterior(int arm, std::span<const double> y_arm, double alpha, double epsilon, PosteriorMode mode) {
  ArmPosterior p;
  p.arm = arm;
  p.n_a = y_arm.size();
  p.u0 = alpha + arm;
  double sum = 0.0;
  for (double y : y_arm) sum += y;
  const double n1 = static_cast<double>(p.n_a) + 1.0;
  p.u_star = mode == PosteriorMode::literal ? (p.u0 + static_cast<double>(p.n_a) * sum) / n1 : (p.u0 + sum) / n1;
  p.eps_star = epsilon / n1;
  return p;
}

double pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 2) return 0.0;
  const Vector xc = x.array() - x.mean();
  const Vector yc = y.array() - y.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return xc.dot(yc) / std::sqrt(sxx * syy);
}

ConfounderDraw generate_confounder(const Dataset& d, const ConfounderConfig& cfg) {
  cfg.validate();
  const auto& a = d.treatment();
  const auto& y = d.outcome();
  std::array<std::vector<double>, 2> by_arm;
  for (Eigen::Index i = 0; i < a.size(); ++i) by_arm[a[i] > 0.5 ? 1 : 0].push_back(y[i]);
  if (by_arm[0].empty() || by_arm[1].empty()) throw DataError("confounder generation needs both treatment arms");

  ConfounderDraw out;
  for (int arm = 0; arm < 2; ++arm) out.posterior[arm] = arm_posterior(arm, by_arm[arm], cfg.alpha, cfg.epsilon, cfg.mode);
  out.u.resize(a.size());
  const auto tag = rng::stream_tag("synthetic-confounder");
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const auto& post = out.posterior[a[i] > 0.5 ? 1 : 0];
    std::mt19937_64 gen(rng::substream_seed(cfg.seed, tag, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> normal(post.u_star, std::sqrt(post.eps_star));
    out.u[i] = normal(gen);
  }
  out.corr_u_a = pearson(out.u, a);
  out.corr_u_y = pearson(out.u, y);
  return out;
}

double overlap_fraction(const Vector& baseline, const Vector& other) {
  if (baseline.size() != other.size()) throw DataError("overlap: length mismatch");
  if (baseline.size() == 0) return 1.0;
  const auto median = [](const Vector& v) {
    return quantile(std::vector<double>(v.data(), v.data() + v.size()), 0.5);
  };
  const double mb = median(baseline);
  const double mo = median(other);
  std::size_t above = 0, both = 0;
  for (Eigen::Index i = 0; i < baseline.size(); ++i) {
    if (baseline[i] > mb) {
      ++above;
      if (other[i] > mo) ++both;
    }
  }
  return above == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(above);
}

ATEEstimate doubly_robust_ate(const OutcomeModel& m, const Dataset& fitted, std::span<const double> weights,
                              int resamples, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(fitted.n());
  if (n == 0) throw EstimationError("ATE on an empty dataset");
  if (!weights.empty() && weights.size() != fitted.n()) throw DataError("weights length does not match dataset");
  const Vector f1 = m.predict(fitted.covariates(), 1.0);
  const Vector f0 = m.predict(fitted.covariates(), 0.0);
  const auto& a = fitted.treatment();
  const auto& y = fitted.outcome();
  // Per-unit pieces; the estimator is a ratio of their sums.
  Vector contrast = f1 - f0;
  Vector t_num(n), t_den(n), c_num(n), c_den(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
    const bool treated = a[i] > 0.5;
    t_num[i] = treated ? w * (y[i] - f1[i]) : 0.0;
    t_den[i] = treated ? w : 0.0;
    c_num[i] = treated ? 0.0 : w * (y[i] - f0[i]);
    c_den[i] = treated ? 0.0 : w;
  }
  auto estimate = [&](const std::vector<Eigen::Index>* rows) {
    double sc = 0.0, tn = 0.0, td = 0.0, cn = 0.0, cd = 0.0;
    const auto count = rows ? static_cast<Eigen::Index>(rows->size()) : n;
    for (Eigen::Index q = 0; q < count; ++q) {
      const auto i = rows ? (*rows)[static_cast<std::size_t>(q)] : q;
      sc += contrast[i];
      tn += t_num[i];
      td += t_den[i];
      cn += c_num[i];
      cd += c_den[i];
    }
    double v = sc / static_cast<double>(count);
    if (td > 0.0) v += tn / td;
    if (cd > 0.0) v -= cn / cd;
    return v;
  };

  ATEEstimate out;
  out.ate = estimate(nullptr);
  if (resamples > 1) {
    auto gen = rng::substream(seed, "ate-bootstrap");
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    double s = 0.0, ss = 0.0;
    for (int b = 0; b < resamples; ++b) {
      for (auto& r : rows) r = static_cast<Eigen::Index>(rng::uniform_index(gen, static_cast<std::uint64_t>(n)));
      const double v = estimate(&rows);
      s += v;
      ss += v * v;
    }
    const double mean = s / resamples;
    out.se = std::sqrt(std::max(0.0, (ss - resamples * mean * mean) / (resamples - 1)));
  }
  return out;
}

PlaceboRecord placebo_test(const Dataset& d, const ModelSpec& spec, const AnalysisConfig& cfg,
                           const RankedCohort& original, std::uint64_t seed, int resamples,
                           std::span<const int> truth_levels) {
  Vector fake(static_cast<Eigen::Index>(d.n()));
  auto gen = rng::substream(seed, "placebo-treatment");
  for (Eigen::Index i = 0; i < fake.size(); ++i) fake[i] = rng::uniform01(gen) < 0.5 ? 1.0 : 0.0;
  const Dataset placebo = d.with_treatment(fake);
  const auto res = run_analysis(placebo, spec, cfg);

  PlaceboRecord rec;
  const auto est = doubly_robust_ate(
      res.model, res.fitted,
      std::span<const double>(res.fit_weights.data(), static_cast<std::size_t>(res.fit_weights.size())), resamples,
      seed);
  rec.ate_estimate = est.ate;
  rec.ate_se = est.se;
  rec.rank_rmse_vs_original = rank_rmse(res.ranking, original.level);
  if (!truth_levels.empty()) rec.rank_rmse_vs_truth = rank_rmse(res.ranking, truth_levels);
  rec.fitted_units = res.fitted.n();
  rec.bootstrap_resamples = resamples;
  return rec;
}

std::uint64_t confounder_seed(std::uint64_t master, std::size_t config_index, int run) {
  return rng::substream_seed(rng::substream_seed(master, rng::stream_tag("confounder-config"), config_index),
                             rng::stream_tag("confounder-run"), static_cast<std::uint64_t>(run));
}

std::vector<ConfoundingRecord> confounding_overlap(const Dataset& d, const ModelSpec& spec, const AnalysisConfig& cfg,
                                                   const RankedCohort& baseline,
                                                   std::span<const ConfounderConfig> configs, int runs,
                                                   std::uint64_t master_seed) {
  if (runs < 1) throw ConfigError("sensitivity runs must be at least 1");
  if (baseline.size() != d.n()) throw DataError("baseline ranking does not match dataset rows");
  std::vector<ConfoundingRecord> out;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (int r = 0; r < runs; ++r) {
      ConfounderConfig cc = configs[c];
      cc.seed = confounder_seed(master_seed, c, r);
      const auto draw = generate_confounder(d, cc);
      const auto res = run_analysis(d.with_covariate("u_synthetic", draw.u), spec, cfg);
      ConfoundingRecord rec;
      rec.config_index = c;
      rec.run = r;
      rec.alpha = cc.alpha;
      rec.epsilon = cc.epsilon;
      rec.corr_u_a = draw.corr_u_a;
      rec.corr_u_y = draw.corr_u_y;
      rec.overlap_fraction = overlap_fraction(baseline.ite, res.ranking.ite);
      rec.rank_rmse = rank_rmse(res.ranking, baseline.level);
      out.push_back(rec);
    }
  }
  return out;
}

std::vector<ConfoundingSummary> summarize(std::span<const ConfoundingRecord> records) {
  std::vector<ConfoundingSummary> out;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.config_index == r.config_index; });
    if (it == out.end()) {
      ConfoundingSummary s;
      s.config_index = r.config_index;
      s.alpha = r.alpha;
      s.epsilon = r.epsilon;
      out.push_back(s);
      it = out.end() - 1;
    }
    ++it->runs;
    it->overlap_mean += r.overlap_fraction;
    it->overlap_sd += r.overlap_fraction * r.overlap_fraction;
    it->rank_rmse_mean += r.rank_rmse;
    it->rank_rmse_sd += r.rank_rmse * r.rank_rmse;
    it->corr_u_a_mean += r.corr_u_a;
    it->corr_u_y_mean += r.corr_u_y;
  }
  // Second pass turns the running sums into means and sample sds.
  for (auto& s : out) {
    const double n = s.runs;
    s.overlap_mean /= n;
    s.rank_rmse_mean /= n;
    s.corr_u_a_mean /= n;
    s.corr_u_y_mean /= n;
    const auto sd = [n](double sumsq, double mean) {
      return n > 1 ? std::sqrt(std::max(0.0, (sumsq - n * mean * mean) / (n - 1))) : 0.0;
    };
    s.overlap_sd = sd(s.overlap_sd, s.overlap_mean);
    s.rank_rmse_sd = sd(s.rank_rmse_sd, s.rank_rmse_mean);
  }
  return out;
}

}  // namespace splitrank

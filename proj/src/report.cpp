#include "splitrank/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "splitrank/error.hpp"

namespace splitrank {

const ManifestEntry* Manifest::find(const std::string& file) const {
  for (const auto& e : files) {
    if (e.file == file) return &e;
  }
  return nullptr;
}

void to_json(nlohmann::json& j, const Manifest& m) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& e : m.files) files.push_back({{"file", e.file}, {"bytes", e.bytes}, {"hash", e.hash}});
  j = nlohmann::json{{"config_hash", m.config_hash}, {"hash_algorithm", "fnv1a64"}, {"files", files}};
}

void from_json(const nlohmann::json& j, Manifest& m) {
  m = Manifest{};
  m.config_hash = j.value("config_hash", std::string{});
  for (const auto& e : j.at("files")) {
    m.files.push_back({e.at("file").get<std::string>(), e.at("bytes").get<std::size_t>(), e.at("hash").get<std::string>()});
  }
}

std::string with_hash_header(const std::string& csv_body, const std::string& hash) {
  return "# config_hash=" + hash + "\n" + csv_body;
}

ManifestEntry write_output(const std::filesystem::path& dir, const std::string& name, const std::string& content) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw DataError("write failed for " + path.string());
  return {name, content.size(), content_hash(content)};
}

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  nlohmann::json j = m;
  write_output(dir, "manifest.json", j.dump(2) + "\n");
}

namespace {

std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); }

bool has_rankings(const RunReport& r) {
  return std::any_of(r.models.begin(), r.models.end(), [](const auto& m) { return m.ranking.has_value(); });
}

bool has_sensitivity(const RunReport& r) {
  return std::any_of(r.models.begin(), r.models.end(),
                     [](const auto& m) { return m.placebo.has_value() || !m.confounding.empty(); });
}

bool has_validation(const RunReport& r) {
  return std::any_of(r.models.begin(), r.models.end(), [](const auto& m) { return m.validation.has_value(); });
}

}  // namespace

std::string ranking_csv(const RunReport& r) {
  std::ostringstream out;
  out << "model,index,id,ite,rank,level";
  const bool truth = !r.truth_levels.empty();
  if (truth) out << ",true_level";
  const auto* cfg_grid = r.config.contains("k_grid") ? &r.config.at("k_grid") : nullptr;
  std::vector<double> grid = cfg_grid ? cfg_grid->get<std::vector<double>>() : default_k_grid();
  for (double k : grid) out << ",top_" << format_double(k);
  out << '\n';
  for (const auto& m : r.models) {
    if (!m.ranking) continue;
    const auto& rk = *m.ranking;
    std::vector<std::size_t> cut;
    for (double k : grid) cut.push_back(top_count(rk.size(), k));
    for (std::size_t i = 0; i < rk.size(); ++i) {
      out << m.spec.name << ',' << i << ',' << (rk.ids.empty() ? static_cast<std::int64_t>(i) : rk.ids[i]) << ','
          << num(rk.ite[static_cast<Eigen::Index>(i)]) << ',' << rk.rank[i] << ',' << rk.level[i];
      if (truth) out << ',' << r.truth_levels[i];
      for (auto c : cut) out << ',' << (rk.rank[i] <= c ? 1 : 0);
      out << '\n';
    }
  }
  return out.str();
}

std::string balance_csv(const RunReport& r) { return r.balance ? format_balance_csv(*r.balance) : std::string{}; }

std::string overlap_csv(const RunReport& r) {
  std::ostringstream out;
  out << "model,config,run,alpha,epsilon,overlap,rank_rmse,corr_u_a,corr_u_y\n";
  for (const auto& m : r.models) {
    for (const auto& c : m.confounding) {
      out << m.spec.name << ',' << c.config_index << ',' << c.run << ',' << num(c.alpha) << ',' << num(c.epsilon)
          << ',' << num(c.overlap_fraction) << ',' << num(c.rank_rmse) << ',' << num(c.corr_u_a) << ','
          << num(c.corr_u_y) << '\n';
    }
  }
  return out.str();
}

std::string cate_by_k_csv(const RunReport& r) {
  std::ostringstream out;
  out << "model,k,group,n,first_stage,cate,se,separated,true_cate_mean\n";
  for (const auto& m : r.models) {
    if (!m.validation) continue;
    for (const auto& rec : m.validation->records) {
      out << m.spec.name << ',' << num(rec.k) << ',' << rec.group << ',' << rec.n << ',' << num(rec.first_stage)
          << ',' << num(rec.cate) << ',' << num(rec.se) << ',' << (rec.separated ? 1 : 0) << ','
          << (rec.true_cate_mean ? num(*rec.true_cate_mean) : std::string{}) << '\n';
    }
  }
  return out.str();
}

nlohmann::json sensitivity_json(const RunReport& r) {
  nlohmann::json j;
  j["config_hash"] = r.config_hash;
  j["configs"] = r.config.contains("sensitivity") ? r.config.at("sensitivity") : nlohmann::json(nullptr);
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : r.models) {
    nlohmann::json mj;
    mj["name"] = m.spec.name;
    if (m.placebo) {
      mj["placebo"] = {{"ate_estimate", m.placebo->ate_estimate},
                       {"ate_se", m.placebo->ate_se},
                       {"rank_rmse_vs_original", m.placebo->rank_rmse_vs_original},
                       {"rank_rmse_vs_truth", m.placebo->rank_rmse_vs_truth ? nlohmann::json(*m.placebo->rank_rmse_vs_truth)
                                                                             : nlohmann::json(nullptr)}};
    }
    if (!m.placebo_error.empty()) mj["placebo_error"] = m.placebo_error;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& c : m.confounding) {
      recs.push_back({{"config", c.config_index},
                      {"run", c.run},
                      {"alpha", c.alpha},
                      {"epsilon", c.epsilon},
                      {"corr_u_a", c.corr_u_a},
                      {"corr_u_y", c.corr_u_y},
                      {"overlap_fraction", c.overlap_fraction},
                      {"rank_rmse", c.rank_rmse}});
    }
    mj["confounding"] = recs;
    nlohmann::json sums = nlohmann::json::array();
    for (const auto& s : m.confounding_summary) {
      sums.push_back({{"config", s.config_index},
                      {"alpha", s.alpha},
                      {"epsilon", s.epsilon},
                      {"runs", s.runs},
                      {"overlap_mean", s.overlap_mean},
                      {"overlap_sd", s.overlap_sd},
                      {"rank_rmse_mean", s.rank_rmse_mean},
                      {"rank_rmse_sd", s.rank_rmse_sd},
                      {"corr_u_a_mean", s.corr_u_a_mean},
                      {"corr_u_y_mean", s.corr_u_y_mean}});
    }
    mj["summary"] = sums;
    if (!m.confounding_error.empty()) mj["confounding_error"] = m.confounding_error;
    models.push_back(mj);
  }
  j["models"] = models;
  return j;
}

std::string render_summary(const nlohmann::json& report) {
  std::ostringstream out;
  const auto hash = report.value("config_hash", std::string{});
  out << "<!-- config_hash=" << hash << " -->\n";
  out << "# splitrank run summary\n\n";
  out << "- version: " << report.value("version", std::string{"?"}) << "\n";
  out << "- seed: " << report.value("seed", std::uint64_t{0}) << "\n";
  out << "- config hash: `" << hash << "`\n";
  out << "- units: " << report.value("n_units", std::size_t{0}) << " (retained after trimming: "
      << report.value("n_retained", std::size_t{0}) << ")\n\n";

  const auto fmt = [](const nlohmann::json& v) -> std::string {
    if (v.is_number()) {
      std::ostringstream s;
      s.setf(std::ios::fixed);
      s.precision(4);
      s << v.get<double>();
      return s.str();
    }
    return "n/a";
  };

  if (report.contains("balance")) {
    const auto& b = report.at("balance");
    out << "## Covariate balance\n\n";
    out << "Mean SMD " << fmt(b.at("mean_smd_before")) << " before weighting and " << fmt(b.at("mean_smd_after"))
        << " after; " << fmt(b.at("fraction_improved")) << " of covariates improved. Mean stabilized weight is "
        << fmt(b.at("mean_weight_treated")) << " in the treated arm and " << fmt(b.at("mean_weight_control"))
        << " in the control arm.\n\n";
    const auto flagged = b.at("flagged").get<std::vector<std::string>>();
    if (!flagged.empty()) {
      out << "Covariates above the SMD threshold after weighting:";
      for (const auto& f : flagged) out << ' ' << f;
      out << "\n\n";
    }
  }
  if (report.contains("weighting_error")) {
    out << "Propensity stage failed: " << report.at("weighting_error").get<std::string>() << "\n\n";
  }

  const auto& models = report.at("models");
  if (!models.empty()) {
    out << "## Models\n\n";
    out << "| model | family | causal | rank RMSE | Spearman | placebo ATE (SE) | placebo rank RMSE vs truth | IV "
           "separated |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& m : models) {
      out << "| " << m.at("name").get<std::string>() << " | " << m.at("family").get<std::string>() << " | "
          << (m.at("causal").get<bool>() ? "yes" : "no") << " | ";
      if (m.at("status") != "ok") {
        out << "failed: " << m.value("error", std::string{}) << " | | | | |\n";
        continue;
      }
      out << fmt(m.at("rank_rmse")) << " | " << fmt(m.at("spearman")) << " | ";
      if (m.contains("placebo")) {
        out << fmt(m.at("placebo").at("ate_estimate")) << " (" << fmt(m.at("placebo").at("ate_se")) << ") | "
            << fmt(m.at("placebo").at("rank_rmse_vs_truth")) << " | ";
      } else {
        out << "n/a | n/a | ";
      }
      if (m.contains("validation")) {
        const auto& v = m.at("validation");
        out << (v.at("all_separated").get<bool>() ? "all " : "not all ") << v.at("evaluated").get<std::size_t>()
            << " thresholds |\n";
      } else {
        out << "n/a |\n";
      }
    }
    out << "\n";

    bool header = false;
    for (const auto& m : models) {
      if (!m.contains("confounding")) continue;
      if (!header) {
        out << "## Synthetic confounder sensitivity\n\n";
        out << "| model | alpha | epsilon | runs | overlap mean (sd) | rank RMSE mean (sd) | corr(U,A) | corr(U,Y) |\n";
        out << "|---|---|---|---|---|---|---|---|\n";
        header = true;
      }
      for (const auto& c : m.at("confounding")) {
        out << "| " << m.at("name").get<std::string>() << " | " << format_double(c.at("alpha").get<double>()) << " | "
            << format_double(c.at("epsilon").get<double>()) << " | " << c.at("runs").get<int>() << " | "
            << fmt(c.at("overlap_mean")) << " (" << fmt(c.at("overlap_sd")) << ") | " << fmt(c.at("rank_rmse_mean"))
            << " (" << fmt(c.at("rank_rmse_sd")) << ") | " << fmt(c.at("corr_u_a_mean")) << " | "
            << fmt(c.at("corr_u_y_mean")) << " |\n";
      }
    }
    if (header) out << "\nLower rank RMSE and higher overlap mean the ranking is more robust to the injected confounder.\n\n";
  }
  out << "Per-unit and per-threshold numbers are in ranking.csv, balance.csv, overlap.csv and cate_by_k.csv.\n";
  return out.str();
}

Manifest emit_report(const RunReport& r, const std::filesystem::path& dir) {
  Manifest man;
  man.config_hash = r.config_hash;
  const nlohmann::json rj = to_json(r);
  man.files.push_back(write_output(dir, "report.json", rj.dump(2) + "\n"));
  if (has_rankings(r)) man.files.push_back(write_output(dir, "ranking.csv", with_hash_header(ranking_csv(r), r.config_hash)));
  if (r.balance) man.files.push_back(write_output(dir, "balance.csv", with_hash_header(balance_csv(r), r.config_hash)));
  if (has_sensitivity(r)) {
    man.files.push_back(write_output(dir, "sensitivity.json", sensitivity_json(r).dump(2) + "\n"));
    man.files.push_back(write_output(dir, "overlap.csv", with_hash_header(overlap_csv(r), r.config_hash)));
  }
  if (has_validation(r)) {
    man.files.push_back(write_output(dir, "cate_by_k.csv", with_hash_header(cate_by_k_csv(r), r.config_hash)));
  }
  if (!r.models.empty()) man.files.push_back(write_output(dir, "summary.md", render_summary(rj)));
  write_manifest(dir, man);
  return man;
}

}  // namespace splitrank

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "splitrank/pipeline.hpp"

namespace splitrank {

struct ManifestEntry {
  std::string file;
  std::size_t bytes = 0;
  std::string hash;
};

struct Manifest {
  std::string config_hash;
  std::vector<ManifestEntry> files;

  const ManifestEntry* find(const std::string& file) const;
};

void to_json(nlohmann::json& j, const Manifest& m);
void from_json(const nlohmann::json& j, Manifest& m);

/// "# config_hash=<hash>" followed by the body.
std::string with_hash_header(const std::string& csv_body, const std::string& hash);

/// Writes `content` to dir/name, creating dir. Throws DataError naming the
/// path on failure. Returns the manifest entry.
ManifestEntry write_output(const std::filesystem::path& dir, const std::string& name, const std::string& content);

/// Writes manifest.json into dir.
void write_manifest(const std::filesystem::path& dir, const Manifest& m);

// Multi-model output bodies (without the hash header line).
std::string ranking_csv(const RunReport& r);
std::string balance_csv(const RunReport& r);
std::string overlap_csv(const RunReport& r);
std::string cate_by_k_csv(const RunReport& r);
nlohmann::json sensitivity_json(const RunReport& r);

/// Human-readable summary rendered from report.json content.
std::string render_summary(const nlohmann::json& report);

/// Writes report.json plus every output the report has data for
/// (ranking.csv, balance.csv, sensitivity.json, overlap.csv, cate_by_k.csv,
/// summary.md) and manifest.json listing them.
Manifest emit_report(const RunReport& r, const std::filesystem::path& dir);

}  // namespace splitrank

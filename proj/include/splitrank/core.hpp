#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace splitrank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = std::size_t;

/// Per-unit simulation truth. Only evaluation code reads it.
struct GroundTruth {
  std::vector<int> true_group;  // 1..L
  Vector true_cate;
  Vector y0;
  Vector y1;
  std::vector<int> z;  // target-treatment / instrument draw, 0 or 1
};

/// Column roles of a CSV file. Roles are declared by name, never position.
struct Schema {
  std::string treatment = "a";
  std::string outcome = "y";
  std::vector<std::string> covariates;
  std::optional<std::string> id;

  struct TruthColumns {
    std::string true_group = "true_group";
    std::string true_cate = "true_cate";
    std::string y0 = "y0";
    std::string y1 = "y1";
    std::string z = "z";
  };
  std::optional<TruthColumns> ground_truth;

  /// id, x0..x{k-1}, a, y (+ truth columns when requested).
  static Schema standard(std::size_t k, bool with_truth);
};

void to_json(nlohmann::json& j, const Schema& s);
void from_json(const nlohmann::json& j, Schema& s);

Schema load_schema(const std::filesystem::path& path);

/// Conventional schema for a CSV header: treatment "a", outcome "y", "id"
/// when present, ground truth when every truth column is present, and all
/// other columns as covariates.
Schema detect_schema(const std::string& csv_text);
Schema detect_schema(const std::filesystem::path& path);

/// Immutable table of covariates X, binary treatment A and outcome Y.
///
/// Copies are cheap (the columns are shared). Every transformation returns a
/// new Dataset. `ids` carries each row's identity through subsetting so
/// ranked output can be joined back to the source rows.
class Dataset {
 public:
  Dataset() = default;

  /// Validates and takes ownership of the columns.
  /// Throws DataError on length mismatch, non-finite cells, non-binary
  /// treatment, or ground truth with y1 - y0 != true_cate.
  static Dataset create(Matrix covariates, Vector treatment, Vector outcome,
                        std::vector<std::string> covariate_names = {},
                        std::vector<std::int64_t> ids = {},
                        std::optional<GroundTruth> truth = std::nullopt);

  std::size_t n() const { return data_ ? static_cast<std::size_t>(data_->outcome.size()) : 0; }
  std::size_t k() const { return data_ ? static_cast<std::size_t>(data_->covariates.cols()) : 0; }
  bool empty() const { return n() == 0; }

  const Matrix& covariates() const;
  const Vector& treatment() const;
  const Vector& outcome() const;
  const std::vector<std::string>& covariate_names() const;
  const std::vector<std::int64_t>& ids() const;

  bool has_ground_truth() const { return data_ && data_->truth.has_value(); }
  /// Throws DataError when absent.
  const GroundTruth& ground_truth() const;

  std::size_t treated_count() const;
  bool both_arms_present() const;

  Dataset subset(std::span<const Index> rows) const;
  Dataset with_treatment(Vector treatment) const;
  Dataset with_outcome(Vector outcome) const;
  Dataset with_covariate(std::string name, const Vector& column) const;
  Dataset without_ground_truth() const;

 private:
  struct Columns {
    Matrix covariates;
    Vector treatment;
    Vector outcome;
    std::vector<std::string> names;
    std::vector<std::int64_t> ids;
    std::optional<GroundTruth> truth;
  };
  explicit Dataset(std::shared_ptr<const Columns> data) : data_(std::move(data)) {}

  std::shared_ptr<const Columns> data_;
};

struct SplitSpec {
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Reads a CSV with a header row. Lines starting with '#' are skipped.
/// Errors name the offending 1-based data row.
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);
Dataset parse_dataset(const std::string& csv_text, const Schema& schema);

/// Writes id, covariates, treatment, outcome and (when present) truth columns
/// using the names in `schema`. Round-trips exactly through load_dataset.
void write_dataset(const std::filesystem::path& path, const Dataset& d, const Schema& schema,
                   const std::string& header_comment = {});
std::string format_dataset(const Dataset& d, const Schema& schema);

/// Seeded shuffle, then the first round(n * (1 - f)) rows train and the rest
/// validate. Row order within each part follows the shuffled order.
std::pair<Dataset, Dataset> train_validation_split(const Dataset& d, const SplitSpec& spec);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// FNV-1a 64-bit digest as 16 lowercase hex digits. A fingerprint for
/// change detection, not a cryptographic hash.
std::string content_hash(std::string_view bytes);

}  // namespace splitrank

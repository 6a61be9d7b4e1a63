#include "splitrank/core.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "splitrank/error.hpp"
#include "splitrank/rng.hpp"

namespace splitrank {

namespace {

constexpr double kTruthTolerance = 1e-9;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string row_error(std::size_t row, const std::string& column, const std::string& what) {
  std::ostringstream os;
  os << "row " << row << ", column '" << column << "': " << what;
  return os.str();
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw DataError(std::string("non-finite value in ") + what);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Schema

Schema Schema::standard(std::size_t k, bool with_truth) {
  Schema s;
  s.id = "id";
  for (std::size_t j = 0; j < k; ++j) s.covariates.push_back("x" + std::to_string(j));
  if (with_truth) s.ground_truth = TruthColumns{};
  return s;
}

void to_json(nlohmann::json& j, const Schema& s) {
  j = nlohmann::json{{"treatment", s.treatment}, {"outcome", s.outcome}, {"covariates", s.covariates}};
  if (s.id) j["id"] = *s.id;
  if (s.ground_truth) {
    const auto& t = *s.ground_truth;
    j["ground_truth"] = {{"true_group", t.true_group}, {"true_cate", t.true_cate},
                         {"y0", t.y0},                 {"y1", t.y1},
                         {"z", t.z}};
  }
}

void from_json(const nlohmann::json& j, Schema& s) {
  s = Schema{};
  if (!j.contains("treatment") || !j.contains("outcome")) {
    throw ConfigError("schema must name 'treatment' and 'outcome' columns");
  }
  j.at("treatment").get_to(s.treatment);
  j.at("outcome").get_to(s.outcome);
  if (j.contains("covariates")) j.at("covariates").get_to(s.covariates);
  if (j.contains("id") && !j.at("id").is_null()) s.id = j.at("id").get<std::string>();
  if (j.contains("ground_truth") && !j.at("ground_truth").is_null()) {
    Schema::TruthColumns t;
    const auto& g = j.at("ground_truth");
    t.true_group = g.value("true_group", t.true_group);
    t.true_cate = g.value("true_cate", t.true_cate);
    t.y0 = g.value("y0", t.y0);
    t.y1 = g.value("y1", t.y1);
    t.z = g.value("z", t.z);
    s.ground_truth = t;
  }
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file " + path.string());
  try {
    return nlohmann::json::parse(in).get<Schema>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset

Schema detect_schema(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  Schema s;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<std::string> header;
    for (auto f : split_fields(t)) header.emplace_back(f);
    const auto has = [&](const std::string& n) { return std::find(header.begin(), header.end(), n) != header.end(); };
    if (has("id")) s.id = "id";
    const Schema::TruthColumns g;
    if (has(g.true_group) && has(g.true_cate) && has(g.y0) && has(g.y1) && has(g.z)) s.ground_truth = g;
    break;
  }
  return s;
}

Schema detect_schema(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return detect_schema(ss.str());
}

Dataset Dataset::create(Matrix covariates, Vector treatment, Vector outcome,
                        std::vector<std::string> covariate_names, std::vector<std::int64_t> ids,
                        std::optional<GroundTruth> truth) {
  const auto n = outcome.size();
  if (treatment.size() != n || covariates.rows() != n) {
    throw DataError("column lengths differ: covariates " + std::to_string(covariates.rows()) +
                    ", treatment " + std::to_string(treatment.size()) + ", outcome " +
                    std::to_string(n));
  }
  check_finite(covariates, "covariates");
  check_finite(outcome, "outcome");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (treatment[i] != 0.0 && treatment[i] != 1.0) {
      throw DataError("row " + std::to_string(i + 1) + ": treatment must be 0 or 1, got " +
                      format_double(treatment[i]));
    }
  }
  if (covariate_names.empty()) {
    for (Eigen::Index j = 0; j < covariates.cols(); ++j) covariate_names.push_back("x" + std::to_string(j));
  }
  if (static_cast<Eigen::Index>(covariate_names.size()) != covariates.cols()) {
    throw DataError("covariate name count does not match column count");
  }
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
  }
  if (static_cast<Eigen::Index>(ids.size()) != n) throw DataError("id column length differs");
  if (truth) {
    const auto& t = *truth;
    const auto un = static_cast<std::size_t>(n);
    if (t.true_group.size() != un || static_cast<std::size_t>(t.true_cate.size()) != un ||
        static_cast<std::size_t>(t.y0.size()) != un || static_cast<std::size_t>(t.y1.size()) != un ||
        t.z.size() != un) {
      throw DataError("ground-truth column lengths differ from n");
    }
    for (std::size_t i = 0; i < un; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (std::abs((t.y1[ii] - t.y0[ii]) - t.true_cate[ii]) > kTruthTolerance) {
        throw DataError("row " + std::to_string(i + 1) + ": y1 - y0 differs from true_cate");
      }
      if (t.z[i] != 0 && t.z[i] != 1) {
        throw DataError("row " + std::to_string(i + 1) + ": z must be 0 or 1");
      }
    }
  }
  auto cols = std::make_shared<Columns>();
  cols->covariates = std::move(covariates);
  cols->treatment = std::move(treatment);
  cols->outcome = std::move(outcome);
  cols->names = std::move(covariate_names);
  cols->ids = std::move(ids);
  cols->truth = std::move(truth);
  return Dataset(std::move(cols));
}

namespace {
const Matrix kEmptyMatrix;
const Vector kEmptyVector;
const std::vector<std::string> kEmptyNames;
const std::vector<std::int64_t> kEmptyIds;
}  // namespace

const Matrix& Dataset::covariates() const { return data_ ? data_->covariates : kEmptyMatrix; }
const Vector& Dataset::treatment() const { return data_ ? data_->treatment : kEmptyVector; }
const Vector& Dataset::outcome() const { return data_ ? data_->outcome : kEmptyVector; }
const std::vector<std::string>& Dataset::covariate_names() const {
  return data_ ? data_->names : kEmptyNames;
}
const std::vector<std::int64_t>& Dataset::ids() const { return data_ ? data_->ids : kEmptyIds; }

const GroundTruth& Dataset::ground_truth() const {
  if (!has_ground_truth()) throw DataError("dataset has no ground-truth columns");
  return *data_->truth;
}

std::size_t Dataset::treated_count() const {
  return static_cast<std::size_t>(treatment().sum());
}

bool Dataset::both_arms_present() const {
  const auto t = treated_count();
  return t > 0 && t < n();
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Matrix x(m, static_cast<Eigen::Index>(k()));
  Vector a(m), y(m);
  std::vector<std::int64_t> ids;
  ids.reserve(rows.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    if (src < 0 || static_cast<std::size_t>(src) >= n()) throw DataError("subset row out of range");
    x.row(r) = covariates().row(src);
    a[r] = treatment()[src];
    y[r] = outcome()[src];
    ids.push_back(data_->ids[static_cast<std::size_t>(src)]);
  }
  std::optional<GroundTruth> truth;
  if (has_ground_truth()) {
    const auto& t = *data_->truth;
    GroundTruth s;
    s.true_cate.resize(m);
    s.y0.resize(m);
    s.y1.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto src = rows[static_cast<std::size_t>(r)];
      const auto si = static_cast<Eigen::Index>(src);
      s.true_group.push_back(t.true_group[src]);
      s.z.push_back(t.z[src]);
      s.true_cate[r] = t.true_cate[si];
      s.y0[r] = t.y0[si];
      s.y1[r] = t.y1[si];
    }
    truth = std::move(s);
  }
  return create(std::move(x), std::move(a), std::move(y), covariate_names(), std::move(ids),
                std::move(truth));
}

Dataset Dataset::with_treatment(Vector treatment) const {
  return create(covariates(), std::move(treatment), outcome(), covariate_names(), ids(),
                data_ ? data_->truth : std::nullopt);
}

Dataset Dataset::with_outcome(Vector outcome) const {
  return create(covariates(), treatment(), std::move(outcome), covariate_names(), ids(),
                data_ ? data_->truth : std::nullopt);
}

Dataset Dataset::with_covariate(std::string name, const Vector& column) const {
  if (static_cast<std::size_t>(column.size()) != n()) throw DataError("appended column length differs from n");
  Matrix x(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(k() + 1));
  x.leftCols(static_cast<Eigen::Index>(k())) = covariates();
  x.col(static_cast<Eigen::Index>(k())) = column;
  auto names = covariate_names();
  names.push_back(std::move(name));
  return create(std::move(x), treatment(), outcome(), std::move(names), ids(),
                data_ ? data_->truth : std::nullopt);
}

Dataset Dataset::without_ground_truth() const {
  return create(covariates(), treatment(), outcome(), covariate_names(), ids(), std::nullopt);
}

// ---------------------------------------------------------------------------
// CSV

Dataset parse_dataset(const std::string& csv_text, const Schema& schema) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<std::string> header;
  bool have_header = false;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    for (auto f : split_fields(t)) header.emplace_back(f);
    have_header = true;
    break;
  }
  if (!have_header) throw DataError("no data rows");

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t c = 0; c < header.size(); ++c) pos.emplace(header[c], c);
  auto col = [&](const std::string& name) {
    const auto it = pos.find(name);
    if (it == pos.end()) throw DataError("missing column '" + name + "'");
    return it->second;
  };

  const auto a_col = col(schema.treatment);
  const auto y_col = col(schema.outcome);
  std::optional<std::size_t> id_col;
  if (schema.id) id_col = col(*schema.id);

  std::vector<std::string> cov_names = schema.covariates;
  std::vector<std::string> reserved = {schema.treatment, schema.outcome};
  if (schema.id) reserved.push_back(*schema.id);
  if (schema.ground_truth) {
    const auto& g = *schema.ground_truth;
    reserved.insert(reserved.end(), {g.true_group, g.true_cate, g.y0, g.y1, g.z});
  }
  if (cov_names.empty()) {
    for (const auto& h : header) {
      if (std::find(reserved.begin(), reserved.end(), h) == reserved.end()) cov_names.push_back(h);
    }
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& name : cov_names) cov_cols.push_back(col(name));

  std::array<std::size_t, 5> truth_cols{};
  if (schema.ground_truth) {
    const auto& g = *schema.ground_truth;
    truth_cols = {col(g.true_group), col(g.true_cate), col(g.y0), col(g.y1), col(g.z)};
  }

  std::vector<std::vector<double>> xs;
  std::vector<double> as, ys;
  std::vector<std::int64_t> ids;
  std::vector<std::array<double, 5>> truth_rows;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    ++row;
    const auto fields = split_fields(t);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    auto number = [&](std::size_t c) {
      const auto v = parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(row_error(row, header[c], "unparseable or non-finite value '" +
                                                      std::string(fields[c]) + "'"));
      }
      return *v;
    };
    std::vector<double> x;
    x.reserve(cov_cols.size());
    for (auto c : cov_cols) x.push_back(number(c));
    xs.push_back(std::move(x));
    const double a = number(a_col);
    if (a != 0.0 && a != 1.0) {
      throw DataError(row_error(row, header[a_col], "treatment must be 0 or 1, got " + format_double(a)));
    }
    as.push_back(a);
    ys.push_back(number(y_col));
    if (id_col) {
      const double v = number(*id_col);
      if (v != std::floor(v)) throw DataError(row_error(row, header[*id_col], "id must be an integer"));
      ids.push_back(static_cast<std::int64_t>(v));
    }
    if (schema.ground_truth) {
      std::array<double, 5> tr{};
      for (std::size_t q = 0; q < 5; ++q) tr[q] = number(truth_cols[q]);
      truth_rows.push_back(tr);
    }
  }
  if (row == 0) throw DataError("no data rows");

  const auto n = static_cast<Eigen::Index>(row);
  Matrix X(n, static_cast<Eigen::Index>(cov_cols.size()));
  Vector A(n), Y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& x = xs[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = x[static_cast<std::size_t>(j)];
    A[i] = as[static_cast<std::size_t>(i)];
    Y[i] = ys[static_cast<std::size_t>(i)];
  }
  std::optional<GroundTruth> truth;
  if (schema.ground_truth) {
    GroundTruth g;
    g.true_cate.resize(n);
    g.y0.resize(n);
    g.y1.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& tr = truth_rows[static_cast<std::size_t>(i)];
      g.true_group.push_back(static_cast<int>(tr[0]));
      g.true_cate[i] = tr[1];
      g.y0[i] = tr[2];
      g.y1[i] = tr[3];
      g.z.push_back(static_cast<int>(tr[4]));
    }
    truth = std::move(g);
  }
  return Dataset::create(std::move(X), std::move(A), std::move(Y), std::move(cov_names), std::move(ids),
                         std::move(truth));
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_dataset(ss.str(), schema);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_dataset(const Dataset& d, const Schema& schema) {
  std::ostringstream os;
  const auto& names = schema.covariates.empty() ? d.covariate_names() : schema.covariates;
  if (names.size() != d.k()) throw DataError("schema covariate count does not match dataset");
  const bool truth = schema.ground_truth.has_value() && d.has_ground_truth();
  os << (schema.id ? *schema.id : std::string("id"));
  for (const auto& nm : names) os << ',' << nm;
  os << ',' << schema.treatment << ',' << schema.outcome;
  if (truth) {
    const auto& g = *schema.ground_truth;
    os << ',' << g.true_group << ',' << g.true_cate << ',' << g.y0 << ',' << g.y1 << ',' << g.z;
  }
  os << '\n';
  const auto& X = d.covariates();
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    os << d.ids()[i];
    for (Eigen::Index j = 0; j < X.cols(); ++j) os << ',' << format_double(X(ii, j));
    os << ',' << static_cast<int>(d.treatment()[ii]) << ',' << format_double(d.outcome()[ii]);
    if (truth) {
      const auto& t = d.ground_truth();
      os << ',' << t.true_group[i] << ',' << format_double(t.true_cate[ii]) << ','
         << format_double(t.y0[ii]) << ',' << format_double(t.y1[ii]) << ',' << t.z[i];
    }
    os << '\n';
  }
  return os.str();
}

void write_dataset(const std::filesystem::path& path, const Dataset& d, const Schema& schema,
                   const std::string& header_comment) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << format_dataset(d, schema);
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Splitting

std::pair<Dataset, Dataset> train_validation_split(const Dataset& d, const SplitSpec& spec) {
  const double f = spec.validation_fraction;
  if (!(f >= 0.0) || f >= 1.0) throw ConfigError("validation_fraction must lie in [0, 1)");
  const auto n = d.n();
  if (f > 0.0 && n < 2) throw ConfigError("need at least 2 rows to split");

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  if (f > 0.0) {
    auto gen = rng::substream(spec.seed, "split");
    rng::shuffle(order.begin(), order.end(), gen);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - f)));
  const std::span<const Index> all(order);
  return {d.subset(all.first(n_train)), d.subset(all.subspan(n_train))};
}

}  // namespace splitrank

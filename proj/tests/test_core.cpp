#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "splitrank/core.hpp"
#include "splitrank/error.hpp"

using namespace splitrank;

namespace {

Schema fixture_schema() {
  Schema s;
  s.id = "id";
  return s;
}

const char* kFixture =
    "id,x0,x1,a,y\n"
    "1,0.5,-1.25,1,12\n"
    "2,1.5,0.25,0,3.5\n"
    "3,-2,4,1,0\n";

std::string error_of(const std::string& csv) {
  try {
    parse_dataset(csv, fixture_schema());
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

Dataset counting_dataset(std::size_t n) {
  Matrix x(static_cast<Eigen::Index>(n), 1);
  Vector a(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    a[static_cast<Eigen::Index>(i)] = static_cast<double>(i % 2);
    y[static_cast<Eigen::Index>(i)] = 0.5 * static_cast<double>(i);
  }
  return Dataset::create(x, a, y);
}

}  // namespace

TEST_CASE("load: empty input reports no data rows") {
  CHECK(error_of("") == "no data rows");
  CHECK(error_of("id,x0,x1,a,y\n") == "no data rows");
}

TEST_CASE("load: 3-row fixture and exact write/read roundtrip") {
  const auto d = parse_dataset(kFixture, fixture_schema());
  CHECK(d.n() == 3);
  CHECK(d.k() == 2);
  CHECK(d.covariate_names() == std::vector<std::string>{"x0", "x1"});
  CHECK(d.ids() == std::vector<std::int64_t>{1, 2, 3});
  CHECK(d.covariates()(2, 1) == 4.0);
  CHECK(d.outcome()[1] == 3.5);

  const auto text = format_dataset(d, fixture_schema());
  const auto back = parse_dataset(text, fixture_schema());
  CHECK(back.covariates() == d.covariates());
  CHECK(back.treatment() == d.treatment());
  CHECK(back.outcome() == d.outcome());
  CHECK(back.ids() == d.ids());
  CHECK(format_dataset(back, fixture_schema()) == text);

  // Through the filesystem, with a comment header line.
  const auto path = std::filesystem::temp_directory_path() / "splitrank_core_roundtrip.csv";
  write_dataset(path, d, fixture_schema(), "config_hash=abc");
  const auto loaded = load_dataset(path, fixture_schema());
  CHECK(loaded.covariates() == d.covariates());
  std::filesystem::remove(path);
}

TEST_CASE("load: full-precision doubles survive the roundtrip") {
  Matrix x(2, 1);
  x << 0.1 + 0.2, -1e-300;
  const auto d = Dataset::create(x, Vector::Ones(2), Vector::Constant(2, 1.0 / 3.0));
  const auto back = parse_dataset(format_dataset(d, fixture_schema()), fixture_schema());
  CHECK(back.covariates() == d.covariates());
  CHECK(back.outcome() == d.outcome());
}

TEST_CASE("load: errors name the offending row and column") {
  const auto bad_a = error_of("id,x0,x1,a,y\n1,0,0,1,1\n2,0,0,2,1\n");
  CHECK(bad_a.find("row 2") != std::string::npos);
  CHECK(bad_a.find("'a'") != std::string::npos);

  const auto nan = error_of("id,x0,x1,a,y\n1,0,nan,1,1\n");
  CHECK(nan.find("row 1") != std::string::npos);
  CHECK(nan.find("'x1'") != std::string::npos);

  const auto junk = error_of("id,x0,x1,a,y\n1,0,0,1,1\n2,0,abc,1,1\n");
  CHECK(junk.find("row 2") != std::string::npos);

  CHECK(error_of("id,x0,x1,y\n1,0,0,1\n").find("missing column 'a'") != std::string::npos);
  CHECK(error_of("id,x0,x1,a,y\n1,0,0,1\n").find("row 1") != std::string::npos);
}

TEST_CASE("schema detection and JSON schema") {
  const auto s = detect_schema(std::string(kFixture));
  REQUIRE(s.id.has_value());
  CHECK(*s.id == "id");
  CHECK_FALSE(s.ground_truth.has_value());
  const auto d = parse_dataset(kFixture, s);
  CHECK(d.k() == 2);

  nlohmann::json j = Schema::standard(3, true);
  const auto back = j.get<Schema>();
  CHECK(back.covariates == std::vector<std::string>{"x0", "x1", "x2"});
  CHECK(back.ground_truth.has_value());
}

TEST_CASE("dataset invariants") {
  Matrix x = Matrix::Zero(3, 1);
  CHECK_THROWS_AS(Dataset::create(x, Vector::Ones(2), Vector::Ones(3)), DataError);
  Vector a(3);
  a << 0, 1, 0.5;
  CHECK_THROWS_AS(Dataset::create(x, a, Vector::Ones(3)), DataError);

  GroundTruth t;
  t.true_group = {1, 1, 1};
  t.true_cate = Vector::Constant(3, 2.0);
  t.y0 = Vector::Zero(3);
  t.y1 = Vector::Constant(3, 2.0);
  t.z = {0, 1, 0};
  CHECK_NOTHROW(Dataset::create(x, Vector::Ones(3), Vector::Ones(3), {}, {}, t));
  t.y1[1] = 2.1;
  CHECK_THROWS_AS(Dataset::create(x, Vector::Ones(3), Vector::Ones(3), {}, {}, t), DataError);
}

TEST_CASE("dataset transformations return new values") {
  const auto d = counting_dataset(10);
  const std::vector<Index> rows = {7, 2};
  const auto s = d.subset(rows);
  CHECK(s.n() == 2);
  CHECK(s.ids() == std::vector<std::int64_t>{7, 2});
  CHECK(s.covariates()(0, 0) == 7.0);
  const auto w = d.with_covariate("u", Vector::Ones(10));
  CHECK(w.k() == 2);
  CHECK(d.k() == 1);
  const auto t = d.with_treatment(Vector::Zero(10));
  CHECK(t.treated_count() == 0);
  CHECK(d.treated_count() == 5);
}

TEST_CASE("split: sizes follow round(n (1 - f))") {
  const auto d = counting_dataset(1000);
  const auto [train, valid] = train_validation_split(d, {0.10, 7});
  CHECK(train.n() == 900);
  CHECK(valid.n() == 100);

  const auto [all, none] = train_validation_split(d, {0.0, 7});
  CHECK(all.n() == 1000);
  CHECK(none.n() == 0);
  CHECK(all.ids() == d.ids());

  CHECK_THROWS_AS(train_validation_split(d, {1.0, 7}), ConfigError);
  CHECK_THROWS_AS(train_validation_split(d, {1.5, 7}), ConfigError);
}

TEST_CASE("split: deterministic, disjoint, complete") {
  const auto d = counting_dataset(1000);
  const auto [t1, v1] = train_validation_split(d, {0.1, 42});
  const auto [t2, v2] = train_validation_split(d, {0.1, 42});
  CHECK(t1.ids() == t2.ids());
  CHECK(v1.ids() == v2.ids());

  std::multiset<std::int64_t> all(t1.ids().begin(), t1.ids().end());
  all.insert(v1.ids().begin(), v1.ids().end());
  std::multiset<std::int64_t> expected(d.ids().begin(), d.ids().end());
  CHECK(all == expected);

  const auto [t3, v3] = train_validation_split(d, {0.1, 43});
  CHECK(v3.ids() != v1.ids());
}

TEST_CASE("content hash is FNV-1a 64") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
}

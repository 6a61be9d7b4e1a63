#include "splitrank/outcome.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "splitrank/error.hpp"

namespace splitrank {

namespace {

constexpr std::array<std::pair<Family, const char*>, 7> kFamilies{{
    {Family::linear_wls, "linear_wls"},
    {Family::linear_sgd, "linear_sgd"},
    {Family::poisson, "poisson"},
    {Family::svr_linear, "svr_linear"},
    {Family::tree, "tree"},
    {Family::forest, "forest"},
    {Family::boosted_trees, "boosted_trees"},
}};

}  // namespace

std::string to_string(Family f) {
  for (const auto& [v, name] : kFamilies) {
    if (v == f) return name;
  }
  return "unknown";
}

Family family_from_string(const std::string& s) {
  for (const auto& [v, name] : kFamilies) {
    if (s == name) return v;
  }
  throw ConfigError("unknown model family '" + s + "'");
}

std::string to_string(LossKind l) {
  switch (l) {
    case LossKind::squared_error: return "squared_error";
    case LossKind::poisson_deviance: return "poisson_deviance";
    case LossKind::epsilon_insensitive: return "epsilon_insensitive";
  }
  return "unknown";
}

LossKind loss_for(Family f) {
  if (f == Family::poisson) return LossKind::poisson_deviance;
  if (f == Family::svr_linear) return LossKind::epsilon_insensitive;
  return LossKind::squared_error;
}

bool is_tree_family(Family f) { return f == Family::tree || f == Family::forest || f == Family::boosted_trees; }

// ---------------------------------------------------------------------------
// Feature map

std::size_t FeatureMap::width() const {
  std::size_t w = base_dim;
  if (treatment_column) ++w;
  if (interactions) w += base_dim;
  return w;
}

Matrix FeatureMap::build(const Matrix& x, const Vector& a) const {
  if (static_cast<std::size_t>(x.cols()) != base_dim) {
    throw DataError("covariate dimension " + std::to_string(x.cols()) + " does not match model dimension " +
                    std::to_string(base_dim));
  }
  if (a.size() != x.rows()) throw DataError("treatment length does not match covariate rows");
  const auto k = x.cols();
  Matrix f(x.rows(), static_cast<Eigen::Index>(width()));
  f.leftCols(k) = x;
  Eigen::Index col = k;
  if (treatment_column) f.col(col++) = a;
  if (interactions) f.middleCols(col, k) = a.asDiagonal() * x;
  return f;
}

Matrix FeatureMap::build(const Matrix& x, double a) const { return build(x, Vector::Constant(x.rows(), a)); }

// ---------------------------------------------------------------------------
// Hyperparameters

void Hyperparams::validate(Family f) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("hyperparameter ") + what);
  };
  switch (f) {
    case Family::linear_wls: break;
    case Family::linear_sgd:
      require(sgd_epochs > 0, "sgd_epochs must be positive");
      require(sgd_batch > 0, "sgd_batch must be positive");
      require(sgd_step > 0.0 && sgd_step <= 1.0, "sgd_step must be in (0, 1]");
      break;
    case Family::poisson:
      require(poisson_max_iter > 0, "poisson_max_iter must be positive");
      require(poisson_tol > 0.0, "poisson_tol must be positive");
      require(poisson_l2 >= 0.0, "poisson_l2 must be non-negative");
      break;
    case Family::svr_linear:
      require(svr_epsilon >= 0.0, "svr_epsilon must be non-negative");
      require(svr_c > 0.0, "svr_c must be positive");
      require(svr_iterations > 0, "svr_iterations must be positive");
      require(svr_step > 0.0, "svr_step must be positive");
      break;
    case Family::tree:
    case Family::forest:
    case Family::boosted_trees:
      require(max_bins >= 2 && max_bins <= 256, "max_bins must be in [2, 256]");
      require(min_leaf >= 1, "min_leaf must be at least 1");
      require(tree_max_depth >= 0 && forest_max_depth >= 0 && boost_depth >= 0, "tree depths must be non-negative");
      require(n_trees > 0, "n_trees must be positive");
      require(mtry >= 0, "mtry must be non-negative");
      require(boost_rounds >= 0, "boost_rounds must be non-negative");
      require(shrinkage > 0.0 && shrinkage <= 1.0, "shrinkage must be in (0, 1]");
      break;
  }
}

#define SPLITRANK_HP_FIELDS(X) \
  X(treatment_column)          \
  X(interactions)              \
  X(sgd_epochs)                \
  X(sgd_batch)                 \
  X(sgd_step)                  \
  X(poisson_max_iter)          \
  X(poisson_tol)               \
  X(poisson_l2)                \
  X(svr_epsilon)               \
  X(svr_c)                     \
  X(svr_iterations)            \
  X(svr_step)                  \
  X(max_bins)                  \
  X(tree_max_depth)            \
  X(min_leaf)                  \
  X(n_trees)                   \
  X(mtry)                      \
  X(forest_max_depth)          \
  X(boost_rounds)              \
  X(boost_depth)               \
  X(shrinkage)                 \
  X(seed)

void to_json(nlohmann::json& j, const Hyperparams& h) {
  j = nlohmann::json::object();
#define X(name) j[#name] = h.name;
  SPLITRANK_HP_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, Hyperparams& h) {
  h = Hyperparams{};
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("hyperparams must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
#define X(name) known = known || key == #name;
    SPLITRANK_HP_FIELDS(X)
#undef X
    if (!known) throw ConfigError("unknown hyperparameter '" + key + "'");
  }
  try {
#define X(name) h.name = j.value(#name, h.name);
    SPLITRANK_HP_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hyperparams: ") + e.what());
  }
}

#undef SPLITRANK_HP_FIELDS

// ---------------------------------------------------------------------------
// Model

OutcomeModel::OutcomeModel(Family family, FeatureMap map, std::variant<LinearParams, TreeEnsemble> params,
                           Diagnostics diag)
    : family_(family), map_(map), params_(std::move(params)), diag_(std::move(diag)) {}

bool OutcomeModel::heterogeneous_capacity() const {
  if (!map_.treatment_column) return false;
  return is_tree_family(family_) || map_.interactions || family_ == Family::poisson;
}

Vector OutcomeModel::predict_features(const Matrix& features) const {
  if (const auto* lp = std::get_if<LinearParams>(&params_)) {
    Vector eta = (features * lp->coef).array() + lp->intercept;
    if (family_ == Family::poisson) {
      eta = eta.unaryExpr([](double e) { return std::exp(std::clamp(e, -50.0, 50.0)); });
    }
    return eta;
  }
  const auto& e = std::get<TreeEnsemble>(params_);
  Vector out = Vector::Zero(features.rows());
  for (const auto& t : e.trees) {
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      out[i] += predict_tree(t, features.data() + i, features.rows());
    }
  }
  if (e.average) return e.trees.empty() ? out : Vector(out / static_cast<double>(e.trees.size()));
  return (e.scale * out).array() + e.base;
}

Vector OutcomeModel::predict(const Matrix& x, double a) const { return predict_features(map_.build(x, a)); }

Vector OutcomeModel::predict(const Matrix& x, const Vector& a) const { return predict_features(map_.build(x, a)); }

OutcomeModel fit_outcome_model(const Dataset& d, std::span<const double> weights, Family family,
                               const Hyperparams& hp) {
  hp.validate(family);
  if (d.empty()) throw DataError("cannot fit an outcome model on an empty dataset");
  const auto n = static_cast<Eigen::Index>(d.n());
  Vector w = Vector::Ones(n);
  if (!weights.empty()) {
    if (weights.size() != d.n()) {
      throw DataError("weights length " + std::to_string(weights.size()) + " does not match n = " +
                      std::to_string(d.n()));
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
        throw DataError("weight at row " + std::to_string(i + 1) + " is not positive");
      }
      w[static_cast<Eigen::Index>(i)] = weights[i];
    }
    w /= w.mean();
  }

  FeatureMap map;
  map.base_dim = d.k();
  map.treatment_column = hp.treatment_column;
  map.interactions = hp.interactions && !is_tree_family(family);
  const Matrix features = map.build(d.covariates(), d.treatment());
  const Vector& y = d.outcome();

  Diagnostics diag;
  switch (family) {
    case Family::linear_wls: {
      auto p = detail::fit_wls(features, y, w);
      const Vector r = y - ((features * p.coef).array() + p.intercept).matrix();
      diag.final_loss = (w.array() * r.array().square()).sum() / static_cast<double>(n);
      diag.iterations = 1;
      diag.loss_history = {diag.final_loss};
      return {family, map, std::move(p), diag};
    }
    case Family::linear_sgd: {
      auto p = detail::fit_sgd(features, y, w, hp, diag);
      return {family, map, std::move(p), diag};
    }
    case Family::poisson: {
      auto p = detail::fit_poisson(features, y, w, hp, diag);
      return {family, map, std::move(p), diag};
    }
    case Family::svr_linear: {
      auto p = detail::fit_svr(features, y, w, hp, diag);
      return {family, map, std::move(p), diag};
    }
    case Family::tree: return {family, map, detail::fit_single_tree(features, y, w, hp, diag), diag};
    case Family::forest: return {family, map, detail::fit_forest(features, y, w, hp, diag), diag};
    case Family::boosted_trees: return {family, map, detail::fit_boosted(features, y, w, hp, diag), diag};
  }
  throw ConfigError("unhandled model family");
}

ITETable compute_ite(const OutcomeModel& m, const Dataset& d) {
  ITETable t;
  t.ids = d.ids();
  t.y_hat_1 = m.predict(d.covariates(), 1.0);
  t.y_hat_0 = m.predict(d.covariates(), 0.0);
  const auto* lp = std::get_if<LinearParams>(&m.parameters());
  const auto& fm = m.feature_map();
  if (lp && m.family() != Family::poisson) {
    // Identity link: the contrast is the treatment coefficient plus the
    // interaction terms, computed directly so it carries no cancellation error.
    const auto k = static_cast<Eigen::Index>(fm.base_dim);
    if (!fm.treatment_column) {
      t.ite = Vector::Zero(static_cast<Eigen::Index>(d.n()));
    } else if (!fm.interactions) {
      t.ite = Vector::Constant(static_cast<Eigen::Index>(d.n()), lp->coef[k]);
    } else {
      t.ite = (d.covariates() * lp->coef.segment(k + 1, k)).array() + lp->coef[k];
    }
  } else {
    t.ite = t.y_hat_1 - t.y_hat_0;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

nlohmann::json tree_to_json(const Tree& t) {
  // Column layout keeps large forests compact.
  nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                 left = nlohmann::json::array(), right = nlohmann::json::array(), value = nlohmann::json::array();
  for (const auto& nd : t) {
    feature.push_back(nd.feature);
    threshold.push_back(nd.threshold);
    left.push_back(nd.left);
    right.push_back(nd.right);
    value.push_back(nd.value);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}};
}

Tree tree_from_json(const nlohmann::json& j) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n || n == 0) {
    throw DataError("malformed tree in model JSON");
  }
  Tree t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = TreeNode{feature[i], threshold[i], left[i], right[i], value[i]};
    if (feature[i] >= 0) {
      const auto bad = [n](int c) { return c < 0 || static_cast<std::size_t>(c) >= n; };
      if (bad(left[i]) || bad(right[i])) throw DataError("tree child index out of range in model JSON");
    }
  }
  return t;
}

}  // namespace

void to_json(nlohmann::json& j, const OutcomeModel& m) {
  const auto& map = m.feature_map();
  const auto& diag = m.diagnostics();
  j = nlohmann::json{{"format", "splitrank-outcome-model"},
                     {"family", to_string(m.family())},
                     {"loss_kind", to_string(m.loss_kind())},
                     {"feature_map",
                      {{"base_dim", map.base_dim},
                       {"treatment_column", map.treatment_column},
                       {"interactions", map.interactions}}},
                     {"diagnostics",
                      {{"final_loss", diag.final_loss},
                       {"iterations", diag.iterations},
                       {"converged", diag.converged},
                       {"loss_history", diag.loss_history}}}};
  if (const auto* lp = std::get_if<LinearParams>(&m.parameters())) {
    j["parameters"] = {{"intercept", lp->intercept},
                       {"coef", std::vector<double>(lp->coef.data(), lp->coef.data() + lp->coef.size())}};
  } else {
    const auto& e = std::get<TreeEnsemble>(m.parameters());
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : e.trees) trees.push_back(tree_to_json(t));
    j["parameters"] = {{"base", e.base}, {"scale", e.scale}, {"average", e.average}, {"trees", trees}};
  }
}

void from_json(const nlohmann::json& j, OutcomeModel& m) {
  try {
    const auto family = family_from_string(j.at("family").get<std::string>());
    FeatureMap map;
    const auto& fm = j.at("feature_map");
    map.base_dim = fm.at("base_dim").get<std::size_t>();
    map.treatment_column = fm.at("treatment_column").get<bool>();
    map.interactions = fm.at("interactions").get<bool>();
    Diagnostics diag;
    if (j.contains("diagnostics")) {
      const auto& dj = j.at("diagnostics");
      diag.final_loss = dj.value("final_loss", 0.0);
      diag.iterations = dj.value("iterations", 0);
      diag.converged = dj.value("converged", true);
      diag.loss_history = dj.value("loss_history", std::vector<double>{});
    }
    const auto& pj = j.at("parameters");
    if (is_tree_family(family)) {
      TreeEnsemble e;
      e.base = pj.at("base").get<double>();
      e.scale = pj.at("scale").get<double>();
      e.average = pj.at("average").get<bool>();
      for (const auto& t : pj.at("trees")) e.trees.push_back(tree_from_json(t));
      for (const auto& t : e.trees) {
        for (const auto& nd : t) {
          if (nd.feature >= static_cast<int>(map.width())) throw DataError("tree feature index out of range");
        }
      }
      m = OutcomeModel(family, map, std::move(e), std::move(diag));
    } else {
      LinearParams p;
      p.intercept = pj.at("intercept").get<double>();
      const auto coef = pj.at("coef").get<std::vector<double>>();
      if (coef.size() != map.width()) throw DataError("coefficient count does not match feature map");
      p.coef = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
      m = OutcomeModel(family, map, std::move(p), std::move(diag));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace splitrank

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "splitrank/core.hpp"

namespace splitrank {

enum class Family { linear_wls, linear_sgd, poisson, svr_linear, tree, forest, boosted_trees };
enum class LossKind { squared_error, poisson_deviance, epsilon_insensitive };

std::string to_string(Family f);
Family family_from_string(const std::string& s);
std::string to_string(LossKind l);
LossKind loss_for(Family f);
bool is_tree_family(Family f);

/// How (x, a) becomes a feature row: [x, a, a*x] with the last two parts
/// optional. Tree families use [x, a] and learn interactions by splitting.
struct FeatureMap {
  std::size_t base_dim = 0;
  bool treatment_column = true;
  bool interactions = true;

  std::size_t width() const;
  Matrix build(const Matrix& x, const Vector& a) const;
  Matrix build(const Matrix& x, double a) const;
};

struct Hyperparams {
  bool treatment_column = true;
  bool interactions = true;  // ignored by tree families

  // linear_sgd (SVRG)
  int sgd_epochs = 60;
  int sgd_batch = 32;
  double sgd_step = 0.2;  // multiple of 1 / mean per-row smoothness

  // poisson
  int poisson_max_iter = 100;
  double poisson_tol = 1e-10;
  double poisson_l2 = 1e-8;

  // svr_linear
  double svr_epsilon = 0.1;
  double svr_c = 1.0;
  int svr_iterations = 1500;
  double svr_step = 0.1;  // initial step as a multiple of the weighted outcome sd

  // trees
  int max_bins = 255;
  int tree_max_depth = 8;
  int min_leaf = 20;
  int n_trees = 100;
  int mtry = 0;  // 0: round(sqrt(feature count))
  int forest_max_depth = 32;
  int boost_rounds = 100;
  int boost_depth = 4;
  double shrinkage = 0.1;

  std::uint64_t seed = 0;

  void validate(Family f) const;
};

void to_json(nlohmann::json& j, const Hyperparams& h);
void from_json(const nlohmann::json& j, Hyperparams& h);

struct LinearParams {
  double intercept = 0.0;
  Vector coef;  // over FeatureMap columns, original scale
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;
};

using Tree = std::vector<TreeNode>;

double predict_tree(const Tree& tree, const double* row, Eigen::Index stride);

struct TreeEnsemble {
  double base = 0.0;
  double scale = 1.0;
  bool average = false;  // forest: mean of trees; otherwise base + scale * sum
  std::vector<Tree> trees;
};

struct Diagnostics {
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = true;
  std::vector<double> loss_history;
};

/// A fitted regressor f(x, a).
class OutcomeModel {
 public:
  OutcomeModel() = default;
  OutcomeModel(Family family, FeatureMap map, std::variant<LinearParams, TreeEnsemble> params, Diagnostics diag);

  Family family() const { return family_; }
  LossKind loss_kind() const { return loss_for(family_); }
  const FeatureMap& feature_map() const { return map_; }
  const Diagnostics& diagnostics() const { return diag_; }
  const std::variant<LinearParams, TreeEnsemble>& parameters() const { return params_; }
  bool heterogeneous_capacity() const;

  /// f(x_i, a) for every row of x.
  Vector predict(const Matrix& x, double a) const;
  /// f(x_i, a_i).
  Vector predict(const Matrix& x, const Vector& a) const;

 private:
  Vector predict_features(const Matrix& features) const;

  Family family_ = Family::linear_wls;
  FeatureMap map_;
  std::variant<LinearParams, TreeEnsemble> params_;
  Diagnostics diag_;
};

void to_json(nlohmann::json& j, const OutcomeModel& m);
void from_json(const nlohmann::json& j, OutcomeModel& m);

/// Minimizes sum_i w_i L(y_i, f(x_i, a_i)). Empty `weights` means w = 1,
/// i.e. the ordinary (non-causal) regression. Weights are rescaled to mean 1
/// internally, so multiplying all weights by a constant changes nothing.
OutcomeModel fit_outcome_model(const Dataset& d, std::span<const double> weights, Family family,
                               const Hyperparams& hp = {});

struct ITETable {
  std::vector<std::int64_t> ids;
  Vector ite;
  Vector y_hat_1;
  Vector y_hat_0;

  std::size_t size() const { return ids.size(); }
};

/// ite(x) = f(x, 1) - f(x, 0) for every row of d.
ITETable compute_ite(const OutcomeModel& m, const Dataset& d);

namespace detail {

/// Weighted least squares with intercept; minimum-norm solution.
LinearParams fit_wls(const Matrix& features, const Vector& y, const Vector& w);
LinearParams fit_sgd(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                     Diagnostics& diag);
LinearParams fit_poisson(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                         Diagnostics& diag);
LinearParams fit_svr(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                     Diagnostics& diag);

TreeEnsemble fit_single_tree(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                             Diagnostics& diag);
TreeEnsemble fit_forest(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                        Diagnostics& diag);
TreeEnsemble fit_boosted(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                         Diagnostics& diag);

}  // namespace detail

}  // namespace splitrank

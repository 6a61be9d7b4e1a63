#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "splitrank/outcome.hpp"
#include "splitrank/rng.hpp"

namespace splitrank {

double predict_tree(const Tree& tree, const double* row, Eigen::Index stride) {
  int node = 0;
  while (tree[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& nd = tree[static_cast<std::size_t>(node)];
    node = row[nd.feature * stride] <= nd.threshold ? nd.left : nd.right;
  }
  return tree[static_cast<std::size_t>(node)].value;
}

namespace detail {

namespace {

// Quantile bins per feature. bin(x) = number of thresholds strictly below x,
// so "bin <= b" is exactly "x <= thresholds[b]".
struct BinnedFeatures {
  std::vector<std::vector<double>> thresholds;  // per feature, ascending
  std::vector<std::vector<std::uint8_t>> bins;  // per feature, per row
  std::size_t rows = 0;
};

BinnedFeatures bin_features(const Matrix& f, int max_bins) {
  BinnedFeatures out;
  out.rows = static_cast<std::size_t>(f.rows());
  const auto limit = static_cast<std::size_t>(std::clamp(max_bins, 2, 256));
  for (Eigen::Index j = 0; j < f.cols(); ++j) {
    std::vector<double> v(f.col(j).data(), f.col(j).data() + f.rows());
    std::sort(v.begin(), v.end());
    std::vector<double> distinct = v;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> th;
    if (distinct.size() <= limit) {
      for (std::size_t q = 0; q + 1 < distinct.size(); ++q) th.push_back(0.5 * (distinct[q] + distinct[q + 1]));
    } else {
      // Cut at evenly spaced order statistics, snapped to distinct values.
      for (std::size_t b = 1; b < limit; ++b) {
        const auto pos = b * v.size() / limit;
        const double hi = v[pos];
        const auto it = std::lower_bound(distinct.begin(), distinct.end(), hi);
        if (it == distinct.begin()) continue;
        const double t = 0.5 * (*(it - 1) + *it);
        if (th.empty() || t > th.back()) th.push_back(t);
      }
    }
    std::vector<std::uint8_t> b(out.rows);
    for (std::size_t i = 0; i < out.rows; ++i) {
      const double x = f(static_cast<Eigen::Index>(i), j);
      b[i] = static_cast<std::uint8_t>(std::lower_bound(th.begin(), th.end(), x) - th.begin());
    }
    out.thresholds.push_back(std::move(th));
    out.bins.push_back(std::move(b));
  }
  return out;
}

struct GrowOptions {
  int max_depth = 8;
  int min_leaf = 20;
  int mtry = 0;  // 0: all features
};

class TreeGrower {
 public:
  TreeGrower(const BinnedFeatures& bf, const Vector& target, const Vector& weight, const std::vector<int>& count,
             GrowOptions opts, std::mt19937_64* gen)
      : bf_(bf), y_(target), w_(weight), count_(count), opts_(opts), gen_(gen) {}

  Tree grow(std::vector<std::uint32_t> rows) {
    tree_.clear();
    build(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    int bin = -1;
    double gain = 0.0;
  };

  int build(std::vector<std::uint32_t>& rows, int depth) {
    double sw = 0.0, swy = 0.0;
    int cnt = 0;
    for (auto i : rows) {
      sw += w_[i];
      swy += w_[i] * y_[i];
      cnt += count_[i];
    }
    const int id = static_cast<int>(tree_.size());
    tree_.push_back(TreeNode{-1, 0.0, -1, -1, sw > 0.0 ? swy / sw : 0.0});
    if (depth >= opts_.max_depth || cnt < 2 * opts_.min_leaf || sw <= 0.0) return id;

    const Split best = find_split(rows, sw, swy);
    if (best.feature < 0) return id;

    const auto& fb = bf_.bins[static_cast<std::size_t>(best.feature)];
    std::vector<std::uint32_t> left, right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    for (auto i : rows) {
      (fb[i] <= best.bin ? left : right).push_back(i);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    auto& nd = tree_[static_cast<std::size_t>(id)];
    nd.feature = best.feature;
    nd.threshold = bf_.thresholds[static_cast<std::size_t>(best.feature)][static_cast<std::size_t>(best.bin)];
    nd.left = l;
    nd.right = r;
    return id;
  }

  Split find_split(const std::vector<std::uint32_t>& rows, double sw, double swy) {
    const auto nf = static_cast<int>(bf_.bins.size());
    std::vector<int> features(static_cast<std::size_t>(nf));
    std::iota(features.begin(), features.end(), 0);
    auto m = nf;
    if (opts_.mtry > 0 && opts_.mtry < nf && gen_ != nullptr) {
      // Partial Fisher-Yates: the first mtry entries are a uniform sample.
      for (int q = 0; q < opts_.mtry; ++q) {
        const auto j = q + static_cast<int>(rng::uniform_index(*gen_, static_cast<std::uint64_t>(nf - q)));
        std::swap(features[static_cast<std::size_t>(q)], features[static_cast<std::size_t>(j)]);
      }
      m = opts_.mtry;
      std::sort(features.begin(), features.begin() + m);
    }

    const double parent = swy * swy / sw;
    Split best;
    for (int q = 0; q < m; ++q) {
      const int f = features[static_cast<std::size_t>(q)];
      const auto nb = bf_.thresholds[static_cast<std::size_t>(f)].size() + 1;
      if (nb < 2) continue;
      hist_w_.assign(nb, 0.0);
      hist_wy_.assign(nb, 0.0);
      hist_c_.assign(nb, 0);
      const auto& fb = bf_.bins[static_cast<std::size_t>(f)];
      for (auto i : rows) {
        const auto b = fb[i];
        hist_w_[b] += w_[i];
        hist_wy_[b] += w_[i] * y_[i];
        hist_c_[b] += count_[i];
      }
      double lw = 0.0, lwy = 0.0;
      int lc = 0;
      int total = 0;
      for (auto c : hist_c_) total += c;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        lw += hist_w_[b];
        lwy += hist_wy_[b];
        lc += hist_c_[b];
        const int rc = total - lc;
        if (lc < opts_.min_leaf) continue;
        if (rc < opts_.min_leaf) break;
        const double rw = sw - lw;
        if (lw <= 0.0 || rw <= 0.0) continue;
        const double rwy = swy - lwy;
        const double gain = lwy * lwy / lw + rwy * rwy / rw - parent;
        if (gain > best.gain + 1e-12 * std::abs(parent)) {
          best.gain = gain;
          best.feature = f;
          best.bin = static_cast<int>(b);
        }
      }
    }
    return best;
  }

  const BinnedFeatures& bf_;
  const Vector& y_;
  const Vector& w_;
  const std::vector<int>& count_;
  GrowOptions opts_;
  std::mt19937_64* gen_;
  Tree tree_;
  std::vector<double> hist_w_, hist_wy_;
  std::vector<int> hist_c_;
};

std::vector<std::uint32_t> all_rows(std::size_t n) {
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0U);
  return rows;
}

double weighted_sse(const Vector& y, const Vector& pred, const Vector& w) {
  return (w.array() * (y - pred).array().square()).sum() / static_cast<double>(y.size());
}

Vector predict_rows(const Tree& t, const Matrix& f) {
  Vector out(f.rows());
  for (Eigen::Index i = 0; i < f.rows(); ++i) out[i] = predict_tree(t, f.data() + i, f.rows());
  return out;
}

}  // namespace

TreeEnsemble fit_single_tree(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                             Diagnostics& diag) {
  const auto bf = bin_features(features, hp.max_bins);
  const std::vector<int> ones(static_cast<std::size_t>(y.size()), 1);
  TreeGrower grower(bf, y, w, ones, GrowOptions{hp.tree_max_depth, hp.min_leaf, 0}, nullptr);
  TreeEnsemble e;
  e.trees.push_back(grower.grow(all_rows(static_cast<std::size_t>(y.size()))));
  diag.iterations = 1;
  diag.final_loss = weighted_sse(y, predict_rows(e.trees.front(), features), w);
  diag.loss_history = {diag.final_loss};
  return e;
}

TreeEnsemble fit_forest(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                        Diagnostics& diag) {
  const auto bf = bin_features(features, hp.max_bins);
  const auto n = static_cast<std::size_t>(y.size());
  const int mtry = hp.mtry > 0 ? hp.mtry
                               : std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(features.cols())))));
  TreeEnsemble e;
  e.average = true;
  Vector oob_sum = Vector::Zero(y.size());
  for (int t = 0; t < hp.n_trees; ++t) {
    auto gen = rng::substream(hp.seed, "forest-tree", static_cast<std::uint64_t>(t));
    // Bootstrap multiplicities enter as frequency weights.
    std::vector<int> count(n, 0);
    for (std::size_t d = 0; d < n; ++d) ++count[rng::uniform_index(gen, n)];
    Vector wt(y.size());
    std::vector<std::uint32_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      wt[static_cast<Eigen::Index>(i)] = w[static_cast<Eigen::Index>(i)] * count[i];
      if (count[i] > 0) rows.push_back(static_cast<std::uint32_t>(i));
    }
    TreeGrower grower(bf, y, wt, count, GrowOptions{hp.forest_max_depth, hp.min_leaf, mtry}, &gen);
    e.trees.push_back(grower.grow(std::move(rows)));
    oob_sum += predict_rows(e.trees.back(), features);
    if ((t + 1) % 10 == 0 || t + 1 == hp.n_trees) {
      diag.loss_history.push_back(weighted_sse(y, oob_sum / static_cast<double>(t + 1), w));
    }
  }
  diag.iterations = hp.n_trees;
  diag.final_loss = diag.loss_history.empty() ? 0.0 : diag.loss_history.back();
  return e;
}

TreeEnsemble fit_boosted(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                         Diagnostics& diag) {
  const auto bf = bin_features(features, hp.max_bins);
  const std::vector<int> ones(static_cast<std::size_t>(y.size()), 1);
  TreeEnsemble e;
  e.base = y.dot(w) / w.sum();
  e.scale = hp.shrinkage;
  Vector fitted = Vector::Constant(y.size(), e.base);
  diag.loss_history = {weighted_sse(y, fitted, w)};
  for (int r = 0; r < hp.boost_rounds; ++r) {
    const Vector residual = y - fitted;
    TreeGrower grower(bf, residual, w, ones, GrowOptions{hp.boost_depth, hp.min_leaf, 0}, nullptr);
    e.trees.push_back(grower.grow(all_rows(static_cast<std::size_t>(y.size()))));
    fitted += hp.shrinkage * predict_rows(e.trees.back(), features);
    diag.loss_history.push_back(weighted_sse(y, fitted, w));
  }
  diag.iterations = hp.boost_rounds;
  diag.final_loss = diag.loss_history.back();
  return e;
}

}  // namespace detail

}  // namespace splitrank

#include <algorithm>
#include <cmath>

#include "splitrank/error.hpp"
#include "splitrank/outcome.hpp"
#include "splitrank/rng.hpp"

namespace splitrank::detail {

namespace {

// Feature columns centered and scaled with the fitting weights. Constant
// columns are centered to zero and left unscaled.
struct Scaled {
  Matrix z;
  Vector mean;
  Vector sd;
};

Scaled scale_features(const Matrix& f, const Vector& w) {
  Scaled s;
  const double sw = w.sum();
  s.mean = (f.transpose() * w) / sw;
  s.sd.resize(f.cols());
  s.z.resize(f.rows(), f.cols());
  for (Eigen::Index j = 0; j < f.cols(); ++j) {
    const auto centered = (f.col(j).array() - s.mean[j]);
    const double var = (w.array() * centered.square()).sum() / sw;
    s.sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    s.z.col(j) = centered / s.sd[j];
  }
  return s;
}

LinearParams unscale(double intercept, const Vector& theta, const Scaled& s) {
  LinearParams p;
  p.coef = theta.array() / s.sd.array();
  p.intercept = intercept - p.coef.dot(s.mean);
  return p;
}

double weighted_mean(const Vector& v, const Vector& w) { return v.dot(w) / w.sum(); }

}  // namespace

LinearParams fit_wls(const Matrix& features, const Vector& y, const Vector& w) {
  const auto n = features.rows();
  const auto p = features.cols();
  const Vector sw = w.array().sqrt();
  Matrix design(n, p + 1);
  design.col(0) = sw;
  design.rightCols(p) = sw.asDiagonal() * features;
  const Vector rhs = sw.cwiseProduct(y);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
  const Vector theta = cod.solve(rhs);
  LinearParams out;
  out.intercept = theta[0];
  out.coef = theta.tail(p);
  return out;
}

LinearParams fit_sgd(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                     Diagnostics& diag) {
  // SVRG on the weight-centered problem; the intercept is then exact.
  const auto s = scale_features(features, w);
  const auto n = s.z.rows();
  const auto p = s.z.cols();
  const double ybar = weighted_mean(y, w);
  const Vector yc = y.array() - ybar;

  auto loss = [&](const Vector& theta) {
    const Vector r = yc - s.z * theta;
    return 0.5 * (w.array() * r.array().square()).sum() / static_cast<double>(n);
  };
  double lbar = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) lbar += w[i] * s.z.row(i).squaredNorm();
  lbar /= static_cast<double>(n);
  const double eta = lbar > 0.0 ? hp.sgd_step / lbar : 0.0;
  const auto batch = std::min<Eigen::Index>(hp.sgd_batch, n);
  const auto inner = std::max<Eigen::Index>(1, 2 * n / batch);

  auto gen = rng::substream(hp.seed, "linear-sgd");
  Vector theta = Vector::Zero(p);
  Vector snapshot = theta;
  Vector step(p);
  double prev = loss(theta);
  diag.loss_history = {prev};
  int epoch = 0;
  for (; epoch < hp.sgd_epochs; ++epoch) {
    snapshot = theta;
    const Vector mu = -(s.z.transpose() * (w.array() * (yc - s.z * snapshot).array()).matrix()) / static_cast<double>(n);
    if (mu.size() == 0 || mu.cwiseAbs().maxCoeff() < 1e-14 * (1.0 + std::abs(ybar))) break;
    for (Eigen::Index t = 0; t < inner; ++t) {
      step = mu;
      for (Eigen::Index b = 0; b < batch; ++b) {
        const auto i = static_cast<Eigen::Index>(rng::uniform_index(gen, static_cast<std::uint64_t>(n)));
        const double diff = s.z.row(i).dot(theta - snapshot);
        step.noalias() += (w[i] * diff / static_cast<double>(batch)) * s.z.row(i).transpose();
      }
      theta.noalias() -= eta * step;
    }
    const double cur = loss(theta);
    diag.loss_history.push_back(cur);
    if (std::abs(prev - cur) <= 1e-15 * (1.0 + cur)) {
      ++epoch;
      break;
    }
    prev = cur;
  }
  diag.iterations = epoch;
  diag.final_loss = loss(theta);
  diag.converged = true;
  return unscale(ybar, theta, s);
}

LinearParams fit_poisson(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                         Diagnostics& diag) {
  if ((y.array() < 0.0).any()) throw DataError("poisson family needs non-negative outcomes");
  const auto s = scale_features(features, w);
  const auto n = s.z.rows();
  const auto p = s.z.cols();
  const double nn = static_cast<double>(n);
  Matrix design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = s.z;

  const double ybar = weighted_mean(y, w);
  Vector theta = Vector::Zero(p + 1);
  theta[0] = ybar > 0.0 ? std::log(ybar) : -30.0;

  auto mean_of = [&](const Vector& th) {
    return (design * th).unaryExpr([](double e) { return std::exp(std::clamp(e, -50.0, 50.0)); }).eval();
  };
  auto objective = [&](const Vector& th) {
    const Vector eta = design * th;
    double v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = std::clamp(eta[i], -50.0, 50.0);
      v += w[i] * (std::exp(e) - y[i] * e);
    }
    return v / nn + 0.5 * hp.poisson_l2 * th.tail(p).squaredNorm();
  };

  double obj = objective(theta);
  diag.loss_history = {obj};
  int it = 0;
  bool converged = false;
  for (; it < hp.poisson_max_iter; ++it) {
    const Vector mu = mean_of(theta);
    Vector grad = design.transpose() * (w.array() * (y - mu).array()).matrix() / nn;
    grad.tail(p) -= hp.poisson_l2 * theta.tail(p);
    if (grad.cwiseAbs().maxCoeff() < hp.poisson_tol) {
      converged = true;
      break;
    }
    Matrix hess = design.transpose() * (w.array() * mu.array()).matrix().asDiagonal() * design / nn;
    hess.diagonal().tail(p).array() += hp.poisson_l2;
    hess.diagonal().array() += 1e-12;
    const Vector delta = hess.ldlt().solve(grad);
    double t = 1.0;
    double cand_obj = obj;
    Vector cand = theta;
    for (int bt = 0; bt < 50; ++bt) {
      cand = theta + t * delta;
      cand_obj = objective(cand);
      if (cand_obj <= obj) break;
      t *= 0.5;
    }
    if (!(cand_obj <= obj)) break;
    const double change = obj - cand_obj;
    theta = cand;
    obj = cand_obj;
    diag.loss_history.push_back(obj);
    if (change <= hp.poisson_tol * (1.0 + std::abs(obj))) {
      converged = true;
      ++it;
      break;
    }
  }
  diag.iterations = it;
  diag.converged = converged;
  // Report the weighted mean Poisson deviance.
  const Vector mu = mean_of(theta);
  double dev = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double term = y[i] > 0.0 ? y[i] * std::log(y[i] / mu[i]) : 0.0;
    dev += 2.0 * w[i] * (term - (y[i] - mu[i]));
  }
  diag.final_loss = dev / nn;
  return unscale(theta[0], theta.tail(p), s);
}

LinearParams fit_svr(const Matrix& features, const Vector& y, const Vector& w, const Hyperparams& hp,
                     Diagnostics& diag) {
  // J = (1/n) sum w_i max(0, |r_i| - eps) + |beta|^2 / (2 C n), with beta on
  // the standardized features. Subgradient steps eta0 / sqrt(t); the result
  // is the average of the second half of the iterates.
  const auto s = scale_features(features, w);
  const auto n = s.z.rows();
  const auto p = s.z.cols();
  const double nn = static_cast<double>(n);
  const double eps = hp.svr_epsilon;
  const double lambda = 1.0 / (hp.svr_c * nn);

  const double ybar = weighted_mean(y, w);
  const double ysd = std::sqrt((w.array() * (y.array() - ybar).square()).sum() / w.sum());
  const double eta0 = hp.svr_step * (ysd > 0.0 ? ysd : 1.0);

  auto objective = [&](double b0, const Vector& th) {
    const Vector r = (y - s.z * th).array() - b0;
    double v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) v += w[i] * std::max(0.0, std::abs(r[i]) - eps);
    return v / nn + 0.5 * lambda * th.squaredNorm();
  };

  double b0 = ybar;
  Vector theta = Vector::Zero(p);
  double avg_b0 = 0.0;
  Vector avg = Vector::Zero(p);
  int averaged = 0;
  const int T = hp.svr_iterations;
  Vector sub(n);
  diag.loss_history = {objective(b0, theta)};
  for (int t = 1; t <= T; ++t) {
    const Vector r = (y - s.z * theta).array() - b0;
    for (Eigen::Index i = 0; i < n; ++i) {
      sub[i] = std::abs(r[i]) > eps ? (r[i] > 0.0 ? -w[i] : w[i]) : 0.0;
    }
    const double g0 = sub.sum() / nn;
    const Vector g = s.z.transpose() * sub / nn + lambda * theta;
    const double eta = eta0 / std::sqrt(static_cast<double>(t));
    b0 -= eta * g0;
    theta.noalias() -= eta * g;
    if (t > T / 2) {
      avg_b0 += b0;
      avg += theta;
      ++averaged;
    }
    if (t % 100 == 0) diag.loss_history.push_back(objective(b0, theta));
  }
  if (averaged > 0) {
    b0 = avg_b0 / averaged;
    theta = avg / averaged;
  }
  diag.iterations = T;
  diag.final_loss = objective(b0, theta);
  diag.converged = true;
  return unscale(b0, theta, s);
}

}  // namespace splitrank::detail

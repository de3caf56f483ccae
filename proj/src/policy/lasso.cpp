#include <algorithm>
#include <cmath>

#include "eegpolicy/error.hpp"
#include "eegpolicy/lasso.hpp"
#include "eegpolicy/random.hpp"

namespace eegpolicy {

std::size_t LassoFit::nonzeros() const {
  return static_cast<std::size_t>((standardized_beta.array() != 0.0).count());
}

Standardization standardize(const Eigen::MatrixXd& X) {
  Standardization s;
  const auto n = static_cast<double>(X.rows());
  s.center = X.colwise().mean().transpose();
  s.Z = X.rowwise() - s.center.transpose();
  s.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double sd = std::sqrt(s.Z.col(j).squaredNorm() / n);
    s.scale(j) = sd > 1e-12 ? sd : 1.0;
    if (sd > 1e-12)
      s.Z.col(j) /= sd;
    else
      s.Z.col(j).setZero();
  }
  return s;
}

double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const auto s = standardize(X);
  const Eigen::VectorXd yc = y.array() - y.mean();
  return (s.Z.transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

std::vector<double> lambda_grid(double lmax, std::size_t count, double decades) {
  if (count == 0) return {};
  if (count == 1) return {lmax};
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = lmax * std::pow(10.0, -decades * static_cast<double>(i) / static_cast<double>(count - 1));
  return g;
}

std::vector<double> default_lambda_grid(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return lambda_grid(lambda_max(X, y), 50, X.cols() >= X.rows() ? 2.0 : 4.0);
}

namespace {

double soft(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

// Coordinate descent on standardized columns. r holds the current residual.
std::size_t solve(const Eigen::MatrixXd& Z, const Eigen::VectorXd& colsq, Eigen::VectorXd& b, Eigen::VectorXd& r,
                  double lambda, const LassoOptions& opt) {
  const auto n = static_cast<double>(Z.rows());
  const auto p = Z.cols();
  std::size_t sweeps = 0;
  auto update = [&](Eigen::Index j) {
    if (colsq(j) == 0.0) return 0.0;
    const double old = b(j);
    const double z = Z.col(j).dot(r) / n + colsq(j) * old;
    const double nb = soft(z, lambda) / colsq(j);
    if (nb != old) {
      r -= (nb - old) * Z.col(j);
      b(j) = nb;
    }
    return std::abs(nb - old) * std::sqrt(colsq(j));
  };
  while (sweeps < opt.max_sweeps) {
    // full pass
    double change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) change = std::max(change, update(j));
    ++sweeps;
    if (change < opt.tolerance) break;
    // iterate on the active set until it settles
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j)
      if (b(j) != 0.0) active.push_back(j);
    while (sweeps < opt.max_sweeps) {
      double c = 0.0;
      for (auto j : active) c = std::max(c, update(j));
      ++sweeps;
      if (c < opt.tolerance) break;
    }
  }
  return sweeps;
}

LassoFit finish(const Standardization& s, double ybar, const Eigen::VectorXd& b, double lambda, std::size_t it) {
  LassoFit f;
  f.lambda = lambda;
  f.standardized_beta = b;
  f.beta = b.cwiseQuotient(s.scale);
  f.intercept = ybar - s.center.dot(f.beta);
  f.iterations = it;
  return f;
}

}  // namespace

std::vector<LassoFit> lasso_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const std::vector<double>& lambdas, const LassoOptions& opt) {
  if (X.rows() != y.size()) throw Error(Errc::length_mismatch, "y", "length differs from X rows");
  if (X.rows() < 2) throw Error(Errc::invalid_argument, "X", "need at least 2 rows");
  if (lambdas.empty()) throw Error(Errc::invalid_argument, "lambda_grid", "empty lambda grid");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw Error(Errc::domain, "lambda", "must be non-negative");
  const auto s = standardize(X);
  const double ybar = y.mean();
  const auto n = static_cast<double>(X.rows());
  Eigen::VectorXd colsq = s.Z.colwise().squaredNorm().transpose() / n;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  Eigen::VectorXd r = y.array() - ybar;
  std::vector<LassoFit> out;
  for (double l : lambdas) {
    const auto it = solve(s.Z, colsq, b, r, l, opt);
    out.push_back(finish(s, ybar, b, l, it));
  }
  return out;
}

LassoFit lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const LassoOptions& opt) {
  return lasso_path(X, y, {lambda}, opt).front();
}

LassoCv lasso_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<double> lambdas, std::size_t folds,
                 std::uint64_t seed, bool one_se_rule) {
  if (lambdas.empty()) throw Error(Errc::invalid_argument, "lambda_grid", "empty lambda grid");
  const auto n = static_cast<std::size_t>(X.rows());
  if (folds < 2 || folds > n) throw Error(Errc::domain, "folds", "need 2 <= folds <= n");
  std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
  Rng rng = make_rng(seed, 0);
  const auto perm = random_permutation(n, rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = i * folds / n;

  const std::size_t L = lambdas.size();
  std::vector<std::vector<double>> mse(folds, std::vector<double>(L));
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> tr, va;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? va : tr).push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd Xt = X(tr, Eigen::all);
    const Eigen::VectorXd yt = y(tr);
    const Eigen::MatrixXd Xv = X(va, Eigen::all);
    const Eigen::VectorXd yv = y(va);
    const auto path = lasso_path(Xt, yt, lambdas);
    for (std::size_t l = 0; l < L; ++l) {
      const Eigen::VectorXd pred = (Xv * path[l].beta).array() + path[l].intercept;
      mse[f][l] = (yv - pred).squaredNorm() / static_cast<double>(va.size());
    }
  }
  LassoCv cv;
  cv.lambdas = lambdas;
  cv.cv_mse.assign(L, 0.0);
  cv.cv_se.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    double m = 0.0;
    for (std::size_t f = 0; f < folds; ++f) m += mse[f][l];
    m /= static_cast<double>(folds);
    double v = 0.0;
    for (std::size_t f = 0; f < folds; ++f) v += (mse[f][l] - m) * (mse[f][l] - m);
    cv.cv_mse[l] = m;
    cv.cv_se[l] = std::sqrt(v / static_cast<double>(folds - 1) / static_cast<double>(folds));
  }
  // strict < keeps the larger lambda on ties
  for (std::size_t l = 1; l < L; ++l)
    if (cv.cv_mse[l] < cv.cv_mse[cv.best_index]) cv.best_index = l;
  if (one_se_rule) {
    const double bound = cv.cv_mse[cv.best_index] + cv.cv_se[cv.best_index];
    for (std::size_t l = 0; l < cv.best_index; ++l)
      if (cv.cv_mse[l] <= bound) {
        cv.best_index = l;
        break;
      }
  }
  const std::vector<double> head(lambdas.begin(), lambdas.begin() + static_cast<long>(cv.best_index) + 1);
  cv.fit = lasso_path(X, y, head).back();
  return cv;
}

KktReport lasso_kkt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoFit& fit) {
  const auto s = standardize(X);
  const auto n = static_cast<double>(X.rows());
  const Eigen::VectorXd r = (y.array() - y.mean()).matrix() - s.Z * fit.standardized_beta;
  const Eigen::VectorXd g = s.Z.transpose() * r / n;
  KktReport k;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double b = fit.standardized_beta(j);
    if (b == 0.0)
      k.max_zero_violation = std::max(k.max_zero_violation, std::abs(g(j)) - fit.lambda);
    else
      k.max_active_violation = std::max(k.max_active_violation, std::abs(g(j) - fit.lambda * (b > 0 ? 1.0 : -1.0)));
  }
  return k;
}

}  // namespace eegpolicy

#include <Eigen/Dense>
#include <cmath>

#include "eegpolicy/error.hpp"
#include "eegpolicy/policy.hpp"

namespace eegpolicy {

double OPolicy::decision(std::span<const double> h) const {
  const Eigen::Map<const Eigen::VectorXd> v(h.data(), static_cast<Eigen::Index>(h.size()));
  if (v.size() != coefficients.size()) throw Error(Errc::length_mismatch, "h", "wrong feature count");
  return intercept + v.dot(coefficients);
}

int OPolicy::act(std::span<const double> h) const { return decision(h) > 0.0 ? 1 : 0; }

std::vector<int> OPolicy::act(const Eigen::MatrixXd& H) const {
  std::vector<int> out(static_cast<std::size_t>(H.rows()));
  for (Eigen::Index r = 0; r < H.rows(); ++r) {
    const Eigen::VectorXd row = H.row(r).transpose();
    out[static_cast<std::size_t>(r)] = act(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return out;
}

Eigen::VectorXd weighted_logistic(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                  double ridge, std::size_t max_steps) {
  const auto n = Z.rows();
  const auto p = Z.cols();
  if (y.size() != n || w.size() != n) throw Error(Errc::length_mismatch, "labels", "length differs from rows");
  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = Z;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(p + 1, 2.0 * ridge);
  pen(0) = 0.0;

  auto loss = [&](const Eigen::VectorXd& t) {
    const Eigen::VectorXd m = (A * t).cwiseProduct(y);
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = -m(i);
      s += w(i) * (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
    }
    return s + ridge * t.tail(p).squaredNorm();
  };
  double current = loss(theta);
  for (std::size_t step = 0; step < max_steps; ++step) {
    const Eigen::VectorXd f = A * theta;
    Eigen::VectorXd grad = pen.cwiseProduct(theta);
    Eigen::VectorXd curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(y(i) * f(i)));  // sigma(-y f)
      grad -= w(i) * y(i) * sig * A.row(i).transpose();
      curv(i) = w(i) * sig * (1.0 - sig);
    }
    Eigen::MatrixXd hess = A.transpose() * curv.asDiagonal() * A;
    hess.diagonal() += pen;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd dir = hess.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = theta - dir;
    double next_loss = loss(next);
    while (next_loss > current && t > 1e-10) {
      t *= 0.5;
      next = theta - t * dir;
      next_loss = loss(next);
    }
    if (next_loss > current) break;
    const double change = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    const double prev = current;
    current = next_loss;
    if (change < 1e-10 || std::abs(prev - current) <= 1e-14 * (1.0 + std::abs(current))) break;
  }
  return theta;
}

OPolicy o_learning_fit(const Eigen::MatrixXd& H, const Eigen::VectorXd& A, const Eigen::VectorXd& R,
                       const Eigen::VectorXd& prob, const OLearningOptions& opt) {
  const auto n = H.rows();
  if (A.size() != n || R.size() != n || prob.size() != n)
    throw Error(Errc::length_mismatch, "o_learning", "inputs differ in length");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (A(i) != 1.0 && A(i) != -1.0) throw Error(Errc::domain, "A", "treatment labels must be -1 or +1");
    if (!(prob(i) > 0.0 && prob(i) < 1.0)) throw Error(Errc::domain, "assignment_prob", "must lie in (0, 1)");
    if (!std::isfinite(R(i))) throw Error(Errc::domain, "R", "non-finite reward");
  }
  OPolicy pol;
  pol.residualizer = opt.residualizer;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  if (opt.residualizer == Residualizer::least_squares) {
    Eigen::MatrixXd D(n, H.cols() + 1);
    D.col(0).setOnes();
    D.rightCols(H.cols()) = H;
    s = D * D.completeOrthogonalDecomposition().solve(R);
  } else if (opt.residualizer == Residualizer::lasso) {
    if (R.maxCoeff() > R.minCoeff()) {
      const auto cv = lasso_cv(H, R, default_lambda_grid(H, R), opt.lasso_folds, opt.seed);
      s = (H * cv.fit.beta).array() + cv.fit.intercept;
    } else {
      s.setConstant(R(0));
    }
  }
  pol.residuals = R - s;
  pol.coefficients = Eigen::VectorXd::Zero(H.cols());
  const double scale = pol.residuals.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) {
    pol.degenerate = true;
    return pol;
  }
  Eigen::VectorXd labels(n), weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = pol.residuals(i);
    labels(i) = r >= 0.0 ? A(i) : -A(i);
    weights(i) = std::abs(r) / prob(i);
  }
  weights /= weights.mean();
  const auto st = standardize(H);
  const Eigen::VectorXd theta =
      weighted_logistic(st.Z, labels, weights, opt.ridge_per_subject * static_cast<double>(n), opt.max_newton_steps);
  pol.coefficients = theta.tail(H.cols()).cwiseQuotient(st.scale);
  pol.intercept = theta(0) - st.center.dot(pol.coefficients);
  return pol;
}

}  // namespace eegpolicy

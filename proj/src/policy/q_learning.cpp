#include "eegpolicy/error.hpp"
#include "eegpolicy/policy.hpp"

namespace eegpolicy {

Eigen::MatrixXd q_design(const Eigen::MatrixXd& X, const Eigen::VectorXd& W) {
  if (W.size() != X.rows()) throw Error(Errc::length_mismatch, "W", "length differs from X rows");
  const auto p = X.cols();
  Eigen::MatrixXd Z(X.rows(), 2 * p + 1);
  Z.leftCols(p) = X;
  Z.col(p) = W;
  Z.rightCols(p) = X.array().colwise() * W.array();
  return Z;
}

double QPolicy::predict_outcome(std::span<const double> x, int arm) const {
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  if (v.size() != main_effects.size()) throw Error(Errc::length_mismatch, "x", "wrong feature count");
  return intercept + v.dot(main_effects) + arm * (treatment + v.dot(interactions));
}

int QPolicy::act(std::span<const double> x) const {
  return predict_outcome(x, 1) > predict_outcome(x, 0) ? 1 : 0;
}

std::vector<int> QPolicy::act(const Eigen::MatrixXd& X) const {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const Eigen::VectorXd row = X.row(r).transpose();
    out[static_cast<std::size_t>(r)] = act(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return out;
}

QPolicy q_learning_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& W, const Eigen::VectorXd& Y,
                       const QLearningOptions& opt) {
  if (Y.size() != X.rows()) throw Error(Errc::length_mismatch, "Y", "length differs from X rows");
  const double treated = W.sum();
  if (treated <= 0.0 || treated >= static_cast<double>(W.size()))
    throw Error(Errc::invalid_argument, "W", "both arms must be present");
  const Eigen::MatrixXd Z = q_design(X, W);
  std::vector<double> grid = opt.lambda_grid;
  if (grid.empty()) grid = default_lambda_grid(Z, Y);
  QPolicy q;
  q.cv = lasso_cv(Z, Y, grid, opt.folds, opt.seed, opt.one_se_rule);
  const auto p = X.cols();
  q.lambda = q.cv.fit.lambda;
  q.intercept = q.cv.fit.intercept;
  q.main_effects = q.cv.fit.beta.head(p);
  q.treatment = q.cv.fit.beta(p);
  q.interactions = q.cv.fit.beta.tail(p);
  return q;
}

}  // namespace eegpolicy

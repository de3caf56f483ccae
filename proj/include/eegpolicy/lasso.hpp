#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace eegpolicy {

// Gaussian lasso, objective (1/2n)||y - b0 - X b||^2 + lambda ||b||_1, solved by cyclic
// coordinate descent on internally standardized columns. Coefficients are reported on
// the original scale; `standardized_beta` keeps the internal ones for KKT checks.
struct LassoFit {
  double lambda = 0.0;
  double intercept = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd standardized_beta;
  std::size_t iterations = 0;

  std::size_t nonzeros() const;
};

struct LassoOptions {
  double tolerance = 1e-7;
  std::size_t max_sweeps = 100000;
};

struct Standardization {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;  // 1 for constant columns
  Eigen::MatrixXd Z;
};

Standardization standardize(const Eigen::MatrixXd& X);

double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
// count values log-spaced from lambda_max down by `decades`.
std::vector<double> lambda_grid(double lambda_max, std::size_t count = 50, double decades = 4.0);
// 50 values from lambda_max down four decades, or two when columns outnumber rows
// (the fit saturates long before the bottom of a deeper path).
std::vector<double> default_lambda_grid(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

std::vector<LassoFit> lasso_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const std::vector<double>& lambdas, const LassoOptions& options = {});
LassoFit lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                   const LassoOptions& options = {});

struct LassoCv {
  std::vector<double> lambdas;
  std::vector<double> cv_mse;
  std::vector<double> cv_se;
  std::size_t best_index = 0;
  LassoFit fit;  // refit on all rows at the chosen lambda
};

// K-fold CV by mean squared error; fold assignment from a seeded shuffle.
LassoCv lasso_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<double> lambdas,
                 std::size_t folds, std::uint64_t seed, bool one_se_rule = false);

// Largest |gradient| on zero coefficients minus lambda, and largest deviation from
// -lambda*sign(b) on nonzero ones, in standardized coordinates. Both <= tol at optimum.
struct KktReport {
  double max_zero_violation = 0.0;
  double max_active_violation = 0.0;
};
KktReport lasso_kkt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoFit& fit);

}  // namespace eegpolicy

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegpolicy/effects.hpp"
#include "eegpolicy/lasso.hpp"

namespace eegpolicy {

// Depth <= 2 axis-aligned tree. Node 0 is the root. A row goes left when
// x[feature] <= threshold.
struct PolicyNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int action = 0;  // leaves only

  bool is_leaf() const { return feature < 0; }
};

struct PolicyTreeModel {
  std::vector<PolicyNode> nodes;
  std::vector<std::string> feature_names;
  // Sum over training rows of the score of the assigned arm.
  double objective = 0.0;

  int act(std::span<const double> x) const;
  std::vector<int> act(const Eigen::MatrixXd& X) const;
  int depth() const;
  std::size_t num_leaves() const;
};

// Exact search over all depth <= 2 trees maximizing sum_i gamma_{pi(X_i)}(i).
// Ties go to the shallower tree, then lowest feature index, then lowest threshold.
PolicyTreeModel search_policy_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma0,
                                   const Eigen::VectorXd& gamma1,
                                   const std::vector<std::string>& feature_names = {});

// Sum of gamma_{a_i}(i) in row order.
double policy_objective(const std::vector<int>& actions, const Eigen::VectorXd& gamma0,
                        const Eigen::VectorXd& gamma1);

std::string policy_tree_to_json(const PolicyTreeModel& tree);
PolicyTreeModel policy_tree_from_json(const std::string& text);

// Q-learning: lasso on [X | W | W*X], action = argmax over a of the fitted mean.
struct QPolicy {
  double lambda = 0.0;
  double intercept = 0.0;
  Eigen::VectorXd main_effects;
  double treatment = 0.0;
  Eigen::VectorXd interactions;
  LassoCv cv;

  double predict_outcome(std::span<const double> x, int arm) const;
  int act(std::span<const double> x) const;
  std::vector<int> act(const Eigen::MatrixXd& X) const;
};

Eigen::MatrixXd q_design(const Eigen::MatrixXd& X, const Eigen::VectorXd& W);

struct QLearningOptions {
  // Empty: default_lambda_grid on the design.
  std::vector<double> lambda_grid;
  std::size_t folds = 10;
  bool one_se_rule = false;
  std::uint64_t seed = 11;
};

QPolicy q_learning_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& W, const Eigen::VectorXd& Y,
                       const QLearningOptions& options = {});

enum class Residualizer {
  none,           // s(H) = 0
  least_squares,  // OLS of R on H
  lasso,          // cross-validated lasso of R on H
};

struct OLearningOptions {
  Residualizer residualizer = Residualizer::lasso;
  // Ridge weight per subject; the penalty is ridge_per_subject * n * ||beta||^2 with
  // weights normalized to mean one.
  double ridge_per_subject = 1e-4;
  std::size_t lasso_folds = 10;
  std::uint64_t seed = 13;
  std::size_t max_newton_steps = 200;
};

// Linear decision function on internally standardized H; A = +1 maps to arm 1.
struct OPolicy {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;  // original scale
  Residualizer residualizer = Residualizer::lasso;
  Eigen::VectorXd residuals;
  bool degenerate = false;

  double decision(std::span<const double> h) const;
  int act(std::span<const double> h) const;
  std::vector<int> act(const Eigen::MatrixXd& H) const;
};

OPolicy o_learning_fit(const Eigen::MatrixXd& H, const Eigen::VectorXd& A, const Eigen::VectorXd& R,
                       const Eigen::VectorXd& assignment_prob, const OLearningOptions& options = {});

// Weighted logistic regression with ridge (intercept unpenalized), Newton iterations.
// Returns [intercept, beta...].
Eigen::VectorXd weighted_logistic(const Eigen::MatrixXd& Z, const Eigen::VectorXd& labels_pm1,
                                  const Eigen::VectorXd& weights, double ridge, std::size_t max_steps = 200);

// Mean of the realized potential outcome under the policy.
double estimate_value(const std::vector<int>& actions, const Eigen::VectorXd& y0,
                      const Eigen::VectorXd& y1);

struct ValueEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  bool ids_overlap = false;
};

// Doubly robust value: mean of gamma_{pi(X_i)}(i). Flags overlap between the
// evaluation ids and the training ids.
ValueEstimate estimate_value_dr(const std::vector<int>& actions, const DoublyRobustScores& scores,
                                const std::vector<std::string>& eval_ids = {},
                                const std::vector<std::string>& train_ids = {});

double policy_accuracy(const std::vector<int>& actions, const std::vector<int>& optimal);

}  // namespace eegpolicy

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace eegpolicy {

struct ForestParams {
  std::size_t num_trees = 2000;
  double subsample_ratio = 0.5;
  double honesty_ratio = 0.5;
  // Variables tried per split; 0 means ceil(sqrt(d)).
  std::size_t mtry = 0;
  // Regression trees: minimum leaf size. Causal trees: minimum count per arm in each child.
  std::size_t min_node_size = 5;
  std::uint64_t seed = 42;
  std::optional<std::size_t> max_depth;

  std::size_t resolved_mtry(std::size_t num_features) const;
  void validate() const;
};

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;  // root is 0

  bool is_leaf() const { return feature < 0; }
};

// One honest tree. Splits are chosen on grow_samples; leaf_samples holds the
// estimate_samples that fall in each leaf (empty for internal nodes).
struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<std::vector<std::uint32_t>> leaf_samples;
  std::vector<std::uint32_t> grow_samples;      // sorted
  std::vector<std::uint32_t> estimate_samples;  // sorted

  std::size_t leaf_of(const Eigen::MatrixXd& X, Eigen::Index row) const;
  std::size_t leaf_of(std::span<const double> x) const;
  bool in_subsample(std::uint32_t i) const;
  std::size_t num_splits() const;
};

struct RegressionForest {
  ForestParams params;
  std::vector<Tree> trees;
  Eigen::MatrixXd X;
  Eigen::VectorXd target;
};

RegressionForest fit_regression_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& target,
                                       const ForestParams& params);
double predict(const RegressionForest& forest, std::span<const double> x);
Eigen::VectorXd predict(const RegressionForest& forest, const Eigen::MatrixXd& X);
// Prediction for training row i from trees whose subsample excludes i.
double predict_oob(const RegressionForest& forest, std::size_t i);
Eigen::VectorXd predict_oob(const RegressionForest& forest);

struct CausalForestOptions {
  ForestParams params;
  std::size_t nuisance_folds = 10;
  double propensity_clip = 0.05;
  // Per-fold nuisance forest settings; defaults to params with num_trees / nuisance_folds.
  std::optional<ForestParams> nuisance_params;
  // Use a known assignment probability instead of fitting a propensity forest.
  std::optional<double> known_propensity;
};

struct CausalForestModel {
  ForestParams params;
  std::vector<Tree> trees;
  Eigen::MatrixXd X;
  Eigen::VectorXd W;
  Eigen::VectorXd Y;
  // Cross-fitted nuisances; e_hat already clipped.
  Eigen::VectorXd m_hat;
  Eigen::VectorXd e_hat;
  std::vector<int> nuisance_fold;
  std::size_t clipped_propensities = 0;
  double propensity_clip = 0.05;

  Eigen::VectorXd y_residual() const { return Y - m_hat; }
  Eigen::VectorXd w_residual() const { return W - e_hat; }
  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
};

struct NuisanceEstimates {
  Eigen::VectorXd m_hat;
  Eigen::VectorXd e_hat;
  std::vector<int> fold;
  std::size_t clipped = 0;
};

// K-fold cross-fitting of E[Y|X] and P[W=1|X].
NuisanceEstimates cross_fit_nuisances(const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                                      const Eigen::VectorXd& Y, const CausalForestOptions& options);

CausalForestModel fit_causal_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                                    const Eigen::VectorXd& Y, const CausalForestOptions& options);
// Grow the causal trees on supplied nuisances (used by tuning and tests).
CausalForestModel fit_causal_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                                    const Eigen::VectorXd& Y, const NuisanceEstimates& nuisances,
                                    const ForestParams& params, double propensity_clip = 0.05);

double predict_cate(const CausalForestModel& model, std::span<const double> x);
Eigen::VectorXd predict_cate(const CausalForestModel& model, const Eigen::MatrixXd& X);
double predict_cate_oob(const CausalForestModel& model, std::size_t i);
Eigen::VectorXd predict_cate_oob(const CausalForestModel& model);

// Adaptive weights alpha_i(x) over training rows; they sum to one.
std::vector<double> forest_weights(std::span<const Tree> trees, std::size_t n,
                                   std::span<const double> x);
std::vector<double> forest_weights_oob(std::span<const Tree> trees, const Eigen::MatrixXd& X,
                                       std::size_t i);

struct TuningGrid {
  std::vector<std::size_t> mtry;
  std::vector<std::size_t> min_node_size;
  std::vector<double> subsample_ratio;

  std::vector<ForestParams> expand(const ForestParams& base) const;
};

struct TuningResult {
  ForestParams best;
  std::vector<ForestParams> candidates;
  std::vector<double> r_loss;
  std::size_t best_index = 0;
};

double r_loss(const CausalForestModel& model, const Eigen::VectorXd& tau_oob);

// Picks the grid point with the smallest out-of-bag R-loss; exact ties go to the
// larger min_node_size.
TuningResult tune_r_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                         const Eigen::VectorXd& Y, const TuningGrid& grid,
                         const CausalForestOptions& base);

struct ImportanceReport {
  std::vector<double> importance;
  std::size_t max_depth_used = 0;
  std::vector<std::size_t> ranking;  // feature indices, most important first
};

// Depth-weighted split frequency: layer shares weighted by l^-2 and normalized by
// the same weights over the layers actually used.
ImportanceReport variable_importance(std::span<const Tree> trees, std::size_t num_features,
                                     std::size_t max_depth = 4);

}  // namespace eegpolicy

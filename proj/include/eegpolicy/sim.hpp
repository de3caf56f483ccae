#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eegpolicy/eeg_io.hpp"
#include "eegpolicy/forest.hpp"

namespace eegpolicy::sim {

struct CategoricalVariable {
  std::string name;
  std::vector<double> probs;  // level 0 is the reference level
};

// Depth-limited indicator tree over named continuous covariates; leaves carry the
// potential-outcome means.
struct EffectNode {
  std::string feature;  // empty for a leaf
  double threshold = 0.0;
  std::unique_ptr<EffectNode> left;
  std::unique_ptr<EffectNode> right;
  double mu1 = 0.0;
  double mu0 = 0.0;

  EffectNode() = default;
  EffectNode(const EffectNode& other);
  EffectNode& operator=(const EffectNode& other);
  EffectNode(EffectNode&&) noexcept = default;
  EffectNode& operator=(EffectNode&&) noexcept = default;

  bool is_leaf() const { return feature.empty(); }
  int optimal_arm() const { return mu1 > mu0 ? 1 : 0; }
};

enum class EffectSize { strong, weak };
enum class NoiseModel { bernoulli, gaussian };

struct GeneratorSpec {
  std::vector<std::string> continuous_names;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::vector<CategoricalVariable> categoricals;
  EffectNode effect_tree;
  NoiseModel noise = NoiseModel::bernoulli;
  double clip_lo = 0.02;
  double clip_hi = 0.98;
  double gaussian_sd = 1.0;
  EffectSize effect_size = EffectSize::strong;
  std::uint64_t seed = 2021;

  void validate() const;
};

// 216 EEG + 38 clinical continuous columns with block-exchangeable correlation, 10
// categoricals, and a depth-2 effect tree on three EEG features. The two children
// split on different features, so no single split reproduces the optimal rule.
GeneratorSpec default_spec();
GeneratorSpec spec_from_json(const std::string& text);
std::string spec_to_json(const GeneratorSpec& spec);

// Leaves shift 0.1 toward each other: treat-optimal leaves lose 0.1 on mu1 and gain
// 0.1 on mu0, control-optimal leaves the reverse.
GeneratorSpec weaken_effects(const GeneratorSpec& strong);

struct SimDataset {
  FeatureMatrix features;  // categoricals one-hot expanded, reference dropped
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::VectorXd mu0;
  Eigen::VectorXd mu1;
  Eigen::VectorXd tau;
  std::vector<int> optimal;
  std::vector<int> leaf;
};

// Potential outcomes share one uniform draw per subject, so Y(optimal) >= Y(other)
// holds row by row.
SimDataset generate_dataset(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed);

enum class Method { policy_tree, q_learning, o_learning };
const char* to_string(Method m) noexcept;
Method method_from_string(const std::string& s);

struct BenchmarkConfig {
  std::vector<std::size_t> train_sizes{200, 500};
  std::size_t n_test = 10000;
  std::size_t replicates = 20;
  std::vector<Method> methods{Method::policy_tree, Method::q_learning, Method::o_learning};
  std::uint64_t seed = 7;
  CausalForestOptions forest;

  static BenchmarkConfig desk_scale();
  static BenchmarkConfig full_scale();
};

struct BenchmarkRow {
  std::size_t replicate = 0;
  std::size_t train_n = 0;
  Method method = Method::policy_tree;
  double value = 0.0;
  double accuracy = 0.0;
  double oracle_value = 0.0;
  bool failed = false;
  std::string error;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::string effect_size;

  double mean_value(Method m, std::size_t train_n) const;
  double mean_accuracy(Method m, std::size_t train_n) const;
  double mean_oracle(std::size_t train_n) const;

  std::string rows_csv() const;
  std::string long_csv() const;
  std::string summary_json() const;
};

BenchmarkReport run_benchmark(const GeneratorSpec& spec, const BenchmarkConfig& config);

}  // namespace eegpolicy::sim

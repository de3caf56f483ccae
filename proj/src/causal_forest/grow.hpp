#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "eegpolicy/forest.hpp"

namespace eegpolicy::detail {

enum class SplitRule { regression, causal };

// Per-row inputs of a tree fit. Regression uses `target`; causal uses the
// residuals and the raw arm indicator for the per-arm size constraint.
struct GrowInput {
  const Eigen::MatrixXd* X = nullptr;
  SplitRule rule = SplitRule::regression;
  const double* target = nullptr;
  const double* y_res = nullptr;
  const double* w_res = nullptr;
  const double* arm = nullptr;
  // Rows eligible for subsampling (all rows when empty).
  const std::vector<std::uint32_t>* rows = nullptr;
};

Tree grow_tree(const GrowInput& in, const ForestParams& params, std::uint64_t stream);

}  // namespace eegpolicy::detail

#include "causal_forest/grow.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/forest.hpp"
#include "eegpolicy/parallel.hpp"

namespace eegpolicy {

RegressionForest fit_regression_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& target,
                                       const ForestParams& params) {
  params.validate();
  if (X.rows() != target.size()) throw Error(Errc::length_mismatch, "target", "length differs from X rows");
  if (static_cast<std::size_t>(X.rows()) < 2 * params.min_node_size)
    throw Error(Errc::invalid_argument, "min_node_size", "need at least 2 * min_node_size rows");
  RegressionForest f;
  f.params = params;
  f.X = X;
  f.target = target;
  f.trees.resize(params.num_trees);
  detail::GrowInput in;
  in.X = &f.X;
  in.rule = detail::SplitRule::regression;
  in.target = f.target.data();
  parallel_for(params.num_trees, [&](std::size_t b) { f.trees[b] = detail::grow_tree(in, params, b); });
  return f;
}

namespace {

double leaf_mean(const RegressionForest& f, const Tree& t, std::size_t leaf, bool& ok) {
  const auto& rows = t.leaf_samples[leaf];
  ok = !rows.empty();
  if (!ok) return 0.0;
  double s = 0.0;
  for (auto r : rows) s += f.target(r);
  return s / static_cast<double>(rows.size());
}

}  // namespace

double predict(const RegressionForest& f, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(f.X.cols())) throw Error(Errc::length_mismatch, "x", "wrong feature count");
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& t : f.trees) {
    bool ok;
    const double m = leaf_mean(f, t, t.leaf_of(x), ok);
    if (ok) {
      sum += m;
      ++used;
    }
  }
  if (used == 0) throw Error(Errc::degenerate, "forest", "no tree has an estimation leaf for this point");
  return sum / static_cast<double>(used);
}

Eigen::VectorXd predict(const RegressionForest& f, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  parallel_for(static_cast<std::size_t>(X.rows()), [&](std::size_t i) {
    const Eigen::VectorXd row = X.row(static_cast<Eigen::Index>(i)).transpose();
    out(static_cast<Eigen::Index>(i)) = predict(f, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  });
  return out;
}

double predict_oob(const RegressionForest& f, std::size_t i) {
  double sum = 0.0;
  std::size_t used = 0, eligible = 0;
  for (const auto& t : f.trees) {
    if (t.in_subsample(static_cast<std::uint32_t>(i))) continue;
    ++eligible;
    bool ok;
    const double m = leaf_mean(f, t, t.leaf_of(f.X, static_cast<Eigen::Index>(i)), ok);
    if (ok) {
      sum += m;
      ++used;
    }
  }
  if (eligible == 0) throw Error(Errc::degenerate, "row " + std::to_string(i), "row is in-bag for every tree");
  if (used == 0) throw Error(Errc::degenerate, "row " + std::to_string(i), "no out-of-bag tree has an estimation leaf");
  return sum / static_cast<double>(used);
}

Eigen::VectorXd predict_oob(const RegressionForest& f) {
  Eigen::VectorXd out(f.X.rows());
  parallel_for(static_cast<std::size_t>(f.X.rows()), [&](std::size_t i) { out(static_cast<Eigen::Index>(i)) = predict_oob(f, i); });
  return out;
}

}  // namespace eegpolicy

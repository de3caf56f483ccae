#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "causal_forest/grow.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/forest.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/random.hpp"

namespace eegpolicy {

namespace {

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& W, const Eigen::VectorXd& Y) {
  if (W.size() != X.rows()) throw Error(Errc::length_mismatch, "W", "length differs from X rows");
  if (Y.size() != X.rows()) throw Error(Errc::length_mismatch, "Y", "length differs from X rows");
  std::size_t treated = 0;
  for (Eigen::Index i = 0; i < W.size(); ++i) {
    if (W(i) != 0.0 && W(i) != 1.0) throw Error(Errc::domain, "W", "treatment must be 0 or 1");
    treated += W(i) == 1.0;
  }
  if (treated == 0 || treated == static_cast<std::size_t>(W.size()))
    throw Error(Errc::invalid_argument, "W", "both arms must be present");
}

}  // namespace

NuisanceEstimates cross_fit_nuisances(const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                                      const Eigen::VectorXd& Y, const CausalForestOptions& options) {
  check_inputs(X, W, Y);
  const std::size_t n = static_cast<std::size_t>(X.rows());
  const std::size_t k = options.nuisance_folds;
  if (k < 2 || k > n) throw Error(Errc::domain, "nuisance_folds", "need 2 <= folds <= n");
  ForestParams np = options.nuisance_params.value_or(options.params);
  if (!options.nuisance_params) np.num_trees = std::max<std::size_t>(1, options.params.num_trees / k);

  NuisanceEstimates out;
  out.m_hat.resize(X.rows());
  out.e_hat.resize(X.rows());
  out.fold.assign(n, 0);
  Rng rng = make_rng(options.params.seed, 0xF01D);
  const auto perm = random_permutation(n, rng);
  for (std::size_t i = 0; i < n; ++i) out.fold[perm[i]] = static_cast<int>(i * k / n);

  for (std::size_t f = 0; f < k; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (out.fold[i] == static_cast<int>(f) ? test : train).push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd Xt = X(train, Eigen::all);
    const Eigen::MatrixXd Xv = X(test, Eigen::all);
    ForestParams pm = np, pe = np;
    pm.seed = derive_seed(np.seed, 1000 + f);
    pe.seed = derive_seed(np.seed, 2000 + f);
    const auto mf = fit_regression_forest(Xt, Y(train), pm);
    const Eigen::VectorXd mv = predict(mf, Xv);
    for (std::size_t j = 0; j < test.size(); ++j) out.m_hat(test[j]) = mv(static_cast<Eigen::Index>(j));
    if (!options.known_propensity) {
      const auto ef = fit_regression_forest(Xt, W(train), pe);
      const Eigen::VectorXd ev = predict(ef, Xv);
      for (std::size_t j = 0; j < test.size(); ++j) out.e_hat(test[j]) = ev(static_cast<Eigen::Index>(j));
    }
  }
  if (options.known_propensity) out.e_hat.setConstant(*options.known_propensity);
  const double lo = options.propensity_clip, hi = 1.0 - options.propensity_clip;
  for (Eigen::Index i = 0; i < out.e_hat.size(); ++i) {
    if (out.e_hat(i) < lo || out.e_hat(i) > hi) {
      out.e_hat(i) = std::clamp(out.e_hat(i), lo, hi);
      ++out.clipped;
    }
  }
  return out;
}

CausalForestModel fit_causal_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                                    const Eigen::VectorXd& Y, const NuisanceEstimates& nu,
                                    const ForestParams& params, double clip) {
  check_inputs(X, W, Y);
  params.validate();
  if (nu.m_hat.size() != X.rows() || nu.e_hat.size() != X.rows())
    throw Error(Errc::length_mismatch, "nuisances", "length differs from X rows");
  CausalForestModel m;
  m.params = params;
  m.X = X;
  m.W = W;
  m.Y = Y;
  m.m_hat = nu.m_hat;
  m.e_hat = nu.e_hat;
  m.nuisance_fold = nu.fold;
  m.clipped_propensities = nu.clipped;
  m.propensity_clip = clip;

  const Eigen::VectorXd yr = m.y_residual();
  const Eigen::VectorXd wr = m.w_residual();
  detail::GrowInput in;
  in.X = &m.X;
  in.rule = detail::SplitRule::causal;
  in.y_res = yr.data();
  in.w_res = wr.data();
  in.arm = m.W.data();
  m.trees.resize(params.num_trees);
  parallel_for(params.num_trees, [&](std::size_t b) { m.trees[b] = detail::grow_tree(in, params, b); });
  return m;
}

CausalForestModel fit_causal_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                                    const Eigen::VectorXd& Y, const CausalForestOptions& options) {
  const auto nu = cross_fit_nuisances(X, W, Y, options);
  return fit_causal_forest(X, W, Y, nu, options.params, options.propensity_clip);
}

namespace {

// Accumulates the adaptive-weight numerator and denominator for one leaf.
void add_leaf(const CausalForestModel& m, const std::vector<std::uint32_t>& rows, double& num, double& den) {
  if (rows.empty()) return;
  double syw = 0.0, sww = 0.0;
  for (auto r : rows) {
    const double yr = m.Y(r) - m.m_hat(r);
    const double wr = m.W(r) - m.e_hat(r);
    syw += yr * wr;
    sww += wr * wr;
  }
  const double c = static_cast<double>(rows.size());
  num += syw / c;
  den += sww / c;
}

}  // namespace

double predict_cate(const CausalForestModel& m, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(m.X.cols())) throw Error(Errc::length_mismatch, "x", "wrong feature count");
  double num = 0.0, den = 0.0;
  for (const auto& t : m.trees) add_leaf(m, t.leaf_samples[t.leaf_of(x)], num, den);
  if (!(den > 0.0)) throw Error(Errc::degenerate, "forest", "zero treatment-residual weight at this point");
  return num / den;
}

Eigen::VectorXd predict_cate(const CausalForestModel& m, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  parallel_for(static_cast<std::size_t>(X.rows()), [&](std::size_t i) {
    const Eigen::VectorXd row = X.row(static_cast<Eigen::Index>(i)).transpose();
    out(static_cast<Eigen::Index>(i)) = predict_cate(m, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  });
  return out;
}

double predict_cate_oob(const CausalForestModel& m, std::size_t i) {
  double num = 0.0, den = 0.0;
  std::size_t eligible = 0;
  for (const auto& t : m.trees) {
    if (t.in_subsample(static_cast<std::uint32_t>(i))) continue;
    ++eligible;
    add_leaf(m, t.leaf_samples[t.leaf_of(m.X, static_cast<Eigen::Index>(i))], num, den);
  }
  if (eligible == 0) throw Error(Errc::degenerate, "row " + std::to_string(i), "row is in-bag for every tree");
  if (!(den > 0.0)) throw Error(Errc::degenerate, "row " + std::to_string(i), "zero treatment-residual weight");
  return num / den;
}

Eigen::VectorXd predict_cate_oob(const CausalForestModel& m) {
  Eigen::VectorXd out(m.X.rows());
  parallel_for(m.size(), [&](std::size_t i) { out(static_cast<Eigen::Index>(i)) = predict_cate_oob(m, i); });
  return out;
}

namespace {

std::vector<double> weights_from(std::span<const Tree> trees, std::size_t n,
                                 const std::function<std::size_t(const Tree&)>& leaf,
                                 const std::function<bool(const Tree&)>& use) {
  std::vector<double> alpha(n, 0.0);
  std::size_t used = 0;
  for (const auto& t : trees) {
    if (!use(t)) continue;
    const auto& rows = t.leaf_samples[leaf(t)];
    if (rows.empty()) continue;
    ++used;
    const double w = 1.0 / static_cast<double>(rows.size());
    for (auto r : rows) alpha[r] += w;
  }
  if (used == 0) throw Error(Errc::degenerate, "forest", "no tree contributes a weight");
  for (double& a : alpha) a /= static_cast<double>(used);
  return alpha;
}

}  // namespace

std::vector<double> forest_weights(std::span<const Tree> trees, std::size_t n, std::span<const double> x) {
  return weights_from(trees, n, [&](const Tree& t) { return t.leaf_of(x); }, [](const Tree&) { return true; });
}

std::vector<double> forest_weights_oob(std::span<const Tree> trees, const Eigen::MatrixXd& X, std::size_t i) {
  return weights_from(
      trees, static_cast<std::size_t>(X.rows()),
      [&](const Tree& t) { return t.leaf_of(X, static_cast<Eigen::Index>(i)); },
      [&](const Tree& t) { return !t.in_subsample(static_cast<std::uint32_t>(i)); });
}

}  // namespace eegpolicy

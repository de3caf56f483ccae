#include <fstream>
#include <set>

#include "doctest.h"
#include "eegpolicy/error.hpp"
#include "eegpolicy/forest.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/serialize.hpp"
#include "support.hpp"

using namespace eegpolicy;

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = uniform01(rng);
  return X;
}

Eigen::VectorXd coin_flips(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd W(n);
  for (Eigen::Index i = 0; i < n; ++i) W(i) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  return W;
}

ForestParams small_params(std::size_t trees, std::uint64_t seed = 1) {
  ForestParams p;
  p.num_trees = trees;
  p.seed = seed;
  return p;
}

// Nodes given as (feature, depth); builds a tree with the given parent links.
Tree hand_tree(const std::vector<TreeNode>& nodes) {
  Tree t;
  t.nodes = nodes;
  t.leaf_samples.resize(nodes.size());
  return t;
}

TreeNode split(int f, int l, int r, int depth) { return {f, 0.5, l, r, depth}; }
TreeNode leaf(int depth) { return {-1, 0.0, -1, -1, depth}; }

struct CausalFixture {
  Eigen::MatrixXd X;
  Eigen::VectorXd W, Y;
};

CausalFixture constant_effect(Eigen::Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  CausalFixture f;
  f.X = uniform_matrix(n, 5, rng);
  f.W = coin_flips(n, rng);
  f.Y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) f.Y(i) = 3.0 * f.W(i) + 0.1 * standard_normal(rng);
  return f;
}

}  // namespace

TEST_CASE("regression forest: constant target predicts the constant") {
  Rng rng = make_rng(50);
  const auto X = uniform_matrix(100, 3, rng);
  const auto f = fit_regression_forest(X, Eigen::VectorXd::Constant(100, 2.5), small_params(50));
  const auto p = predict(f, uniform_matrix(10, 3, rng));
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("regression forest: y = x1 has small out-of-bag error") {
  Rng rng = make_rng(51);
  const auto X = uniform_matrix(2000, 1, rng);
  const Eigen::VectorXd y = X.col(0);
  const auto f = fit_regression_forest(X, y, small_params(200));
  const Eigen::VectorXd r = predict_oob(f) - y;
  const double var = (y.array() - y.mean()).square().mean();
  CHECK(r.squaredNorm() / 2000.0 < 0.05 * var);
}

TEST_CASE("regression forest: deterministic for a seed and across thread counts") {
  Rng rng = make_rng(52);
  const auto X = uniform_matrix(300, 4, rng);
  Eigen::VectorXd y = X.col(0) + X.col(1).cwiseAbs2();
  set_num_threads(1);
  const auto a = predict_oob(fit_regression_forest(X, y, small_params(60, 9)));
  set_num_threads(4);
  const auto b = predict_oob(fit_regression_forest(X, y, small_params(60, 9)));
  set_num_threads(0);
  CHECK((a.array() == b.array()).all());
  const auto c = predict_oob(fit_regression_forest(X, y, small_params(60, 10)));
  CHECK((a.array() != c.array()).any());
}

TEST_CASE("regression forest: too few rows and bad params") {
  Rng rng = make_rng(53);
  CHECK_THROWS_AS(fit_regression_forest(uniform_matrix(5, 2, rng), Eigen::VectorXd::Zero(5), small_params(5)), Error);
  ForestParams p = small_params(0);
  CHECK_THROWS_AS(p.validate(), Error);
  p = small_params(10);
  p.honesty_ratio = 1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = small_params(10);
  p.subsample_ratio = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("honesty: grow and estimate samples are disjoint; leaves hold both arms") {
  const auto fx = constant_effect(400, 54);
  CausalForestOptions o;
  o.params = small_params(40);
  o.params.min_node_size = 3;
  const auto m = fit_causal_forest(fx.X, fx.W, fx.Y, o);
  for (const auto& t : m.trees) {
    std::vector<std::uint32_t> both;
    std::set_intersection(t.grow_samples.begin(), t.grow_samples.end(), t.estimate_samples.begin(),
                          t.estimate_samples.end(), std::back_inserter(both));
    CHECK(both.empty());
    std::size_t in_leaves = 0;
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      if (!t.nodes[k].is_leaf()) continue;
      std::size_t treated = 0;
      for (auto i : t.leaf_samples[k]) treated += m.W(i) == 1.0;
      CHECK(treated >= 3);
      CHECK(t.leaf_samples[k].size() - treated >= 3);
      in_leaves += t.leaf_samples[k].size();
    }
    CHECK(in_leaves == t.estimate_samples.size());
  }
}

TEST_CASE("causal forest: constant effect of 3") {
  const auto fx = constant_effect(1000, 55);
  CausalForestOptions o;
  o.params = small_params(500);
  const auto m = fit_causal_forest(fx.X, fx.W, fx.Y, o);
  Rng rng = make_rng(56);
  const auto Xt = uniform_matrix(200, 5, rng);
  const auto tau = predict_cate(m, Xt);
  CHECK((tau.array() - 3.0).abs().mean() < 0.3);
  const auto oob = predict_cate_oob(m);
  const double close = ((oob.array() - 3.0).abs() < 0.5).cast<double>().mean();
  CHECK(close >= 0.9);
}

TEST_CASE("causal forest: null effect is centred on zero") {
  std::vector<double> means;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    Rng rng = make_rng(57, rep);
    const auto X = uniform_matrix(200, 3, rng);
    const auto W = coin_flips(200, rng);
    Eigen::VectorXd Y(200);
    for (Eigen::Index i = 0; i < 200; ++i) Y(i) = X(i, 0) + standard_normal(rng);
    CausalForestOptions o;
    o.params = small_params(100, rep + 1);
    o.nuisance_folds = 5;
    means.push_back(predict_cate_oob(fit_causal_forest(X, W, Y, o)).mean());
  }
  const Eigen::Map<Eigen::VectorXd> v(means.data(), static_cast<Eigen::Index>(means.size()));
  const double mean = v.mean();
  const double se = std::sqrt((v.array() - mean).square().sum() / (v.size() - 1) / static_cast<double>(v.size()));
  CHECK(std::abs(mean) < 2.0 * se);
}

TEST_CASE("forest weights: non-negative, sum to one, reproduce the CATE formula") {
  const auto fx = constant_effect(300, 58);
  CausalForestOptions o;
  o.params = small_params(100);
  const auto m = fit_causal_forest(fx.X, fx.W, fx.Y, o);
  const Eigen::VectorXd yr = m.y_residual(), wr = m.w_residual();
  Rng rng = make_rng(59);
  for (int q = 0; q < 10; ++q) {
    std::vector<double> x(5);
    for (auto& v : x) v = uniform01(rng);
    const auto a = forest_weights(m.trees, m.size(), x);
    double sum = 0.0, num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] >= 0.0);
      sum += a[i];
      num += a[i] * yr(static_cast<Eigen::Index>(i)) * wr(static_cast<Eigen::Index>(i));
      den += a[i] * wr(static_cast<Eigen::Index>(i)) * wr(static_cast<Eigen::Index>(i));
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(predict_cate(m, std::span<const double>(x)) == doctest::Approx(num / den).epsilon(1e-10));
  }
  const auto oob_w = forest_weights_oob(m.trees, m.X, 7);
  double s = 0.0;
  for (double v : oob_w) s += v;
  CHECK(std::abs(s - 1.0) < 1e-9);
  CHECK(oob_w[7] == 0.0);
}

TEST_CASE("out-of-bag prediction with a single tree errors for in-bag rows") {
  const auto fx = constant_effect(200, 60);
  CausalForestOptions o;
  o.params = small_params(1);
  o.params.min_node_size = 2;
  o.nuisance_folds = 4;
  o.nuisance_params = small_params(20);
  const auto m = fit_causal_forest(fx.X, fx.W, fx.Y, o);
  const auto& t = m.trees[0];
  std::uint32_t in = 0, out = 0;
  while (!t.in_subsample(in)) ++in;
  while (t.in_subsample(out)) ++out;
  CHECK_THROWS_AS(predict_cate_oob(m, in), Error);
  const Eigen::VectorXd row = m.X.row(out).transpose();
  CHECK(predict_cate_oob(m, out) == predict_cate(m, std::span<const double>(row.data(), 5)));
}

TEST_CASE("cross-fitted nuisances never use the subject's own outcome") {
  const auto fx = constant_effect(200, 61);
  CausalForestOptions o;
  o.params = small_params(100);
  o.nuisance_folds = 5;
  const auto base = cross_fit_nuisances(fx.X, fx.W, fx.Y, o);
  auto Y2 = fx.Y;
  Y2(17) += 1000.0;
  const auto moved = cross_fit_nuisances(fx.X, fx.W, Y2, o);
  CHECK(moved.fold == base.fold);
  CHECK(moved.m_hat(17) == base.m_hat(17));
  for (Eigen::Index i = 0; i < 200; ++i)
    if (base.fold[static_cast<std::size_t>(i)] == base.fold[17]) CHECK(moved.m_hat(i) == base.m_hat(i));
}

TEST_CASE("propensities are clipped and counted; known propensity skips the e forest") {
  Rng rng = make_rng(62);
  const auto X = uniform_matrix(300, 2, rng);
  Eigen::VectorXd W(300), Y(300);
  for (Eigen::Index i = 0; i < 300; ++i) {
    W(i) = X(i, 0) < 0.1 ? 0.0 : (X(i, 0) > 0.9 ? 1.0 : (uniform01(rng) < 0.5 ? 1.0 : 0.0));
    Y(i) = standard_normal(rng);
  }
  CausalForestOptions o;
  o.params = small_params(100);
  const auto n = cross_fit_nuisances(X, W, Y, o);
  CHECK(n.e_hat.minCoeff() >= 0.05);
  CHECK(n.e_hat.maxCoeff() <= 0.95);
  std::size_t at_bounds = 0;
  for (Eigen::Index i = 0; i < 300; ++i) at_bounds += n.e_hat(i) == 0.05 || n.e_hat(i) == 0.95;
  CHECK(n.clipped == at_bounds);
  o.known_propensity = 0.5;
  const auto k = cross_fit_nuisances(X, W, Y, o);
  CHECK((k.e_hat.array() == 0.5).all());
}

TEST_CASE("causal forest input validation") {
  Rng rng = make_rng(63);
  const auto X = uniform_matrix(50, 2, rng);
  CausalForestOptions o;
  o.params = small_params(10);
  CHECK_THROWS_AS(fit_causal_forest(X, Eigen::VectorXd::Ones(50), Eigen::VectorXd::Zero(50), o), Error);
  CHECK_THROWS_AS(fit_causal_forest(X, Eigen::VectorXd::Constant(50, 2.0), Eigen::VectorXd::Zero(50), o), Error);
  CHECK_THROWS_AS(fit_causal_forest(X, Eigen::VectorXd::Ones(49), Eigen::VectorXd::Zero(50), o), Error);
}

TEST_CASE("causal forest: identical across thread counts and after save/load") {
  const auto fx = constant_effect(300, 64);
  CausalForestOptions o;
  o.params = small_params(80, 3);
  set_num_threads(1);
  const auto a = fit_causal_forest(fx.X, fx.W, fx.Y, o);
  set_num_threads(4);
  const auto b = fit_causal_forest(fx.X, fx.W, fx.Y, o);
  set_num_threads(0);
  const auto ta = predict_cate_oob(a), tb = predict_cate_oob(b);
  CHECK((ta.array() == tb.array()).all());
  const auto dir = testsupport::scratch_dir("forest_io");
  save_causal_forest(a, dir / "m.bin");
  const auto c = load_causal_forest(dir / "m.bin");
  CHECK((predict_cate_oob(c).array() == ta.array()).all());
  CHECK((c.e_hat.array() == a.e_hat.array()).all());
  CHECK(c.nuisance_fold == a.nuisance_fold);
  CHECK(c.params.num_trees == 80);
  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "NOTAMODEL";
  }
  CHECK_THROWS_AS(load_causal_forest(dir / "bad.bin"), Error);
}

TEST_CASE("prediction invariant to training-row permutation given the same trees") {
  const auto fx = constant_effect(200, 65);
  CausalForestOptions o;
  o.params = small_params(30);
  const auto m = fit_causal_forest(fx.X, fx.W, fx.Y, o);
  // Reverse the rows and remap every tree's sample lists accordingly.
  CausalForestModel r = m;
  const auto n = static_cast<std::uint32_t>(m.size());
  auto map = [&](std::uint32_t i) { return n - 1 - i; };
  r.X = m.X.colwise().reverse();
  r.W = m.W.reverse();
  r.Y = m.Y.reverse();
  r.m_hat = m.m_hat.reverse();
  r.e_hat = m.e_hat.reverse();
  for (auto& t : r.trees) {
    for (auto* v : {&t.grow_samples, &t.estimate_samples}) {
      for (auto& i : *v) i = map(i);
      std::sort(v->begin(), v->end());
    }
    for (auto& leafv : t.leaf_samples) {
      for (auto& i : leafv) i = map(i);
      std::sort(leafv.begin(), leafv.end());
    }
  }
  Rng rng = make_rng(66);
  for (int q = 0; q < 5; ++q) {
    std::vector<double> x(5);
    for (auto& v : x) v = uniform01(rng);
    CHECK(predict_cate(r, std::span<const double>(x)) == doctest::Approx(predict_cate(m, std::span<const double>(x))).epsilon(1e-12));
  }
}

TEST_CASE("tuning: single point, exhaustive minimum, ties to larger leaves") {
  Rng rng = make_rng(67);
  const auto X = uniform_matrix(300, 3, rng);
  const auto W = coin_flips(300, rng);
  Eigen::VectorXd Y(300);
  for (Eigen::Index i = 0; i < 300; ++i) Y(i) = (X(i, 0) > 0.5 ? 2.0 : -2.0) * W(i) + 0.5 * standard_normal(rng);
  CausalForestOptions o;
  o.params = small_params(60);
  o.nuisance_folds = 5;
  TuningGrid one{{2}, {5}, {0.5}};
  const auto t1 = tune_r_loss(X, W, Y, one, o);
  CHECK(t1.candidates.size() == 1);
  CHECK(t1.best.mtry == 2);
  CHECK(t1.best.min_node_size == 5);
  TuningGrid grid{{1, 3}, {2, 10}, {0.3, 0.5}};
  const auto t = tune_r_loss(X, W, Y, grid, o);
  CHECK(t.candidates.size() == 8);
  for (double l : t.r_loss) CHECK(t.r_loss[t.best_index] <= l);
  CHECK(t.best.min_node_size == t.candidates[t.best_index].min_node_size);
  // identical candidates produce identical losses; the larger leaf size wins the tie
  TuningGrid tie{{3}, {4, 4, 9}, {0.5}};
  auto base = o;
  base.params.mtry = 3;
  const auto tt = tune_r_loss(X, W, Y * 0.0, tie, base);
  CHECK(tt.r_loss[0] == tt.r_loss[1]);
}

TEST_CASE("importance: single feature everywhere, symmetric split counts") {
  const std::vector<Tree> only_f1{hand_tree({split(1, 1, 2, 0), split(1, 3, 4, 1), leaf(1), leaf(2), leaf(2)})};
  const auto r = variable_importance(only_f1, 3, 4);
  CHECK(r.importance == std::vector<double>{0.0, 1.0, 0.0});
  const std::vector<Tree> sym{hand_tree({split(0, 1, 2, 0), split(1, 3, 4, 1), split(0, 5, 6, 1), leaf(2), leaf(2), leaf(2), leaf(2)}),
                              hand_tree({split(1, 1, 2, 0), split(0, 3, 4, 1), split(1, 5, 6, 1), leaf(2), leaf(2), leaf(2), leaf(2)})};
  const auto s = variable_importance(sym, 2, 4);
  CHECK(s.importance[0] == 0.5);
  CHECK(s.importance[1] == 0.5);
  const std::vector<Tree> none{hand_tree({leaf(0)})};
  CHECK_THROWS_AS(variable_importance(none, 2, 4), Error);
}

TEST_CASE("importance: hand-computed forest") {
  // Tree 1: root f0; left f1 (its left child f2); right f0.  Tree 2: root f1; right f2.
  // Layer 1: f0, f1.  Layer 2: f1, f0, f2.  Layer 3: f2.
  // (1/2 + 1/3 * 1/4) / (1 + 1/4 + 1/9) = 3/7 for f0 and f1; (1/3 * 1/4 + 1/9) / (49/36) = 1/7 for f2.
  const std::vector<Tree> forest{
      hand_tree({split(0, 1, 2, 0), split(1, 3, 4, 1), split(0, 5, 6, 1), split(2, 7, 8, 2), leaf(2), leaf(2), leaf(2), leaf(3), leaf(3)}),
      hand_tree({split(1, 1, 2, 0), leaf(1), split(2, 3, 4, 1), leaf(2), leaf(2)})};
  const auto r = variable_importance(forest, 3, 4);
  CHECK(r.max_depth_used == 3);
  CHECK(std::abs(r.importance[0] - 3.0 / 7.0) <= 1e-15);
  CHECK(std::abs(r.importance[1] - 3.0 / 7.0) <= 1e-15);
  CHECK(std::abs(r.importance[2] - 1.0 / 7.0) <= 1e-15);
}

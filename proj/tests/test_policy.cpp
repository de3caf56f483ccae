#include "doctest.h"
#include "eegpolicy/effects.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/lasso.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/policy.hpp"
#include "support.hpp"

using namespace eegpolicy;
using namespace testsupport;

namespace {

double direct_objective(const PolicyTreeModel& t, const Eigen::MatrixXd& X, const Eigen::VectorXd& g0,
                        const Eigen::VectorXd& g1) {
  double s = 0.0;
  const auto a = t.act(X);
  for (Eigen::Index i = 0; i < X.rows(); ++i) s += a[static_cast<std::size_t>(i)] ? g1(i) : g0(i);
  return s;
}

// Independent KKT check in standardized coordinates (population sd).
double max_zero_violation(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoFit& fit) {
  const double n = static_cast<double>(X.rows());
  Eigen::MatrixXd Z = X.rowwise() - X.colwise().mean();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double sd = std::sqrt(Z.col(j).squaredNorm() / n);
    if (sd > 0) {
      Z.col(j) /= sd;
      b(j) = fit.beta(j) * sd;
    }
  }
  const Eigen::VectorXd r = (y.array() - y.mean()).matrix() - Z * b;
  double worst = -1e300;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double g = std::abs(Z.col(j).dot(r) / n);
    if (fit.beta(j) == 0.0) worst = std::max(worst, g - fit.lambda);
  }
  return worst;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("policy tree equals brute force on small random instances") {
  Rng rng = make_rng(80);
  for (int rep = 0; rep < 150; ++rep) {
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(uniform01(rng) * 17);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(uniform01(rng) * 3);
    const auto X = rep % 2 ? normal_matrix(n, d, rng) : tied_covariates(n, d, rng);
    const auto g0 = dyadic_scores(n, rng), g1 = dyadic_scores(n, rng);
    const auto tree = search_policy_tree(X, g0, g1);
    const double oracle = brute_force_policy(X, g0, g1);
    CHECK(tree.objective == oracle);
    CHECK(direct_objective(tree, X, g0, g1) == oracle);
    CHECK(tree.depth() <= 2);
    CHECK(tree.num_leaves() <= 4);
  }
}

TEST_CASE("decomposed oracle equals literal enumeration on tiny instances") {
  Rng rng = make_rng(81);
  for (int rep = 0; rep < 30; ++rep) {
    const auto X = tied_covariates(6, 2, rng);
    const auto g0 = dyadic_scores(6, rng), g1 = dyadic_scores(6, rng);
    CHECK(brute_force_policy(X, g0, g1) == literal_enumeration(X, g0, g1));
  }
}

TEST_CASE("policy tree with continuous scores stays within rounding of the oracle") {
  Rng rng = make_rng(82);
  for (int rep = 0; rep < 50; ++rep) {
    const auto X = normal_matrix(20, 3, rng);
    const auto g0 = normal_matrix(20, 1, rng).col(0).eval(), g1 = normal_matrix(20, 1, rng).col(0).eval();
    const auto tree = search_policy_tree(X, g0, g1);
    CHECK(std::abs(tree.objective - brute_force_policy(X, g0, g1)) <= 1e-12);
  }
}

TEST_CASE("policy tree: dominance gives treat-all") {
  Rng rng = make_rng(83);
  const auto X = normal_matrix(30, 2, rng);
  const Eigen::VectorXd g0 = normal_matrix(30, 1, rng).col(0);
  const Eigen::VectorXd g1 = (g0.array() + 0.5).matrix();
  const auto tree = search_policy_tree(X, g0, g1);
  for (int a : tree.act(X)) CHECK(a == 1);
  CHECK(tree.objective == doctest::Approx(g1.sum()).epsilon(1e-14));
  CHECK(tree.depth() == 0);
}

TEST_CASE("policy tree recovers a planted depth-2 rule") {
  Rng rng = make_rng(84);
  const Eigen::Index n = 300;
  const auto X = normal_matrix(n, 3, rng);
  Eigen::VectorXd g0(n), g1(n);
  std::vector<int> planted(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = X(i, 1) <= 0.2 ? (X(i, 0) <= -0.3 ? 1 : 0) : (X(i, 2) <= 0.5 ? 0 : 1);
    planted[static_cast<std::size_t>(i)] = a;
    g0(i) = a ? -1.0 : 1.0;
    g1(i) = -g0(i);
  }
  const auto tree = search_policy_tree(X, g0, g1);
  CHECK(tree.act(X) == planted);
  CHECK(tree.depth() == 2);
}

TEST_CASE("policy tree: shifting both scores leaves assignments unchanged") {
  Rng rng = make_rng(85);
  const auto X = normal_matrix(40, 2, rng);
  const auto g0 = dyadic_scores(40, rng), g1 = dyadic_scores(40, rng);
  const auto a = search_policy_tree(X, g0, g1).act(X);
  const auto b = search_policy_tree(X, (g0.array() + 3.0).matrix(), (g1.array() + 3.0).matrix()).act(X);
  CHECK(a == b);
}

TEST_CASE("policy tree: identical across thread counts; errors") {
  Rng rng = make_rng(86);
  const auto X = normal_matrix(200, 5, rng);
  const auto g0 = normal_matrix(200, 1, rng).col(0).eval(), g1 = normal_matrix(200, 1, rng).col(0).eval();
  set_num_threads(1);
  const auto a = policy_tree_to_json(search_policy_tree(X, g0, g1));
  set_num_threads(4);
  const auto b = policy_tree_to_json(search_policy_tree(X, g0, g1));
  set_num_threads(0);
  CHECK(a == b);
  auto bad = g0;
  bad(3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(search_policy_tree(X, bad, g1), Error);
  CHECK_THROWS_AS(search_policy_tree(X, g0.head(3), g1.head(3)), Error);
}

TEST_CASE("policy tree JSON round trip with feature names") {
  Rng rng = make_rng(87);
  const auto X = normal_matrix(60, 3, rng);
  const auto g0 = dyadic_scores(60, rng), g1 = dyadic_scores(60, rng);
  const auto tree = search_policy_tree(X, g0, g1, {"fc2.close.theta", "c1.open.theta", "age"});
  const auto text = policy_tree_to_json(tree);
  CHECK(text.find("split_feature") != std::string::npos);
  const auto back = policy_tree_from_json(text);
  CHECK(back.act(X) == tree.act(X));
  CHECK(back.feature_names == tree.feature_names);
}

TEST_CASE("policy objective and value arithmetic") {
  const Eigen::VectorXd g0 = (Eigen::VectorXd(4) << 1, 2, 3, 4).finished();
  const Eigen::VectorXd g1 = (Eigen::VectorXd(4) << 5, 6, 7, 8).finished();
  CHECK(policy_objective({0, 1, 0, 1}, g0, g1) == 1 + 6 + 3 + 8);
  CHECK(estimate_value({1, 1, 1, 1}, g0, g1) == 6.5);
  DoublyRobustScores s;
  s.gamma0 = g0;
  s.gamma1 = g1;
  s.gamma = g1 - g0;
  double m1 = 0.0;
  for (int i = 0; i < 4; ++i) m1 += g1(i);
  CHECK(estimate_value_dr({1, 1, 1, 1}, s).value == m1 / 4.0);
  CHECK(estimate_value_dr({0, 0, 0, 0}, s).value == 2.5);
  CHECK(estimate_value_dr({1, 0, 1, 0}, s, {"a", "b", "c", "d"}, {"x", "c"}).ids_overlap);
  CHECK_FALSE(estimate_value_dr({1, 0, 1, 0}, s, {"a", "b"}, {"x"}).ids_overlap);
  CHECK(policy_accuracy({1, 1, 1, 1, 1}, {1, 1, 1, 0, 0}) == 0.6);
  CHECK(policy_accuracy({0, 1}, {0, 1}) == 1.0);
}

TEST_CASE("random policy accuracy near one half") {
  Rng rng = make_rng(88);
  std::vector<int> a(10000), opt(10000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = uniform01(rng) < 0.5;
    opt[i] = static_cast<int>(i % 2);
  }
  CHECK(std::abs(policy_accuracy(a, opt) - 0.5) < 0.05);
}

TEST_CASE("lasso: lambda at lambda_max zeroes everything") {
  Rng rng = make_rng(89);
  const auto X = normal_matrix(80, 6, rng);
  const Eigen::VectorXd y = X.col(0) * 2.0 + normal_matrix(80, 1, rng).col(0);
  const double lm = lambda_max(X, y);
  CHECK(lasso_fit(X, y, lm).nonzeros() == 0);
  CHECK(lasso_fit(X, y, lm * 0.9).nonzeros() > 0);
  const auto grid = lambda_grid(lm);
  CHECK(grid.size() == 50);
  CHECK(grid.front() == lm);
  CHECK(grid.back() == doctest::Approx(lm * 1e-4).epsilon(1e-12));
}

TEST_CASE("lasso: lambda = 0 on an orthonormal design is least squares") {
  Rng rng = make_rng(90);
  Eigen::MatrixXd A = normal_matrix(60, 4, rng);
  A = (A.rowwise() - A.colwise().mean()).eval();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(60, 4);
  const Eigen::VectorXd y = Q * Eigen::Vector4d(1, -2, 0.5, 3) + 0.1 * normal_matrix(60, 1, rng).col(0) + Eigen::VectorXd::Constant(60, 4.0);
  Eigen::MatrixXd D(60, 5);
  D.col(0).setOnes();
  D.rightCols(4) = Q;
  const Eigen::VectorXd ols = (D.transpose() * D).ldlt().solve(D.transpose() * y);
  const auto fit = lasso_fit(Q, y, 0.0);
  CHECK(std::abs(fit.intercept - ols(0)) < 1e-6);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(fit.beta(j) - ols(j + 1)) < 1e-6);
}

TEST_CASE("lasso: KKT conditions along a path") {
  Rng rng = make_rng(91);
  const auto X = normal_matrix(100, 30, rng);
  Eigen::VectorXd y = 3.0 * X.col(0) - 2.0 * X.col(5) + normal_matrix(100, 1, rng).col(0);
  const auto grid = lambda_grid(lambda_max(X, y), 20);
  for (const auto& fit : lasso_path(X, y, grid)) {
    CHECK(max_zero_violation(X, y, fit) <= 1e-6);
    const auto k = lasso_kkt(X, y, fit);
    CHECK(k.max_zero_violation <= 1e-6);
    CHECK(k.max_active_violation <= 1e-6);
  }
}

TEST_CASE("lasso CV: deterministic, sparsity monotone above the chosen lambda") {
  Rng rng = make_rng(92);
  const auto X = normal_matrix(120, 15, rng);
  Eigen::VectorXd y = X.col(2) - X.col(7) + normal_matrix(120, 1, rng).col(0);
  const auto grid = lambda_grid(lambda_max(X, y));
  const auto a = lasso_cv(X, y, grid, 5, 3), b = lasso_cv(X, y, grid, 5, 3);
  CHECK(a.best_index == b.best_index);
  CHECK(a.cv_mse == b.cv_mse);
  const auto path = lasso_path(X, y, grid);
  for (std::size_t l = 1; l <= a.best_index; ++l) CHECK(path[l].nonzeros() >= path[l - 1].nonzeros());
  const auto se = lasso_cv(X, y, grid, 5, 3, true);
  CHECK(se.best_index <= a.best_index);
  CHECK_THROWS_AS(lasso_cv(X, y, {}, 5, 3), Error);
}

TEST_CASE("Q-learning: design layout and full shrinkage") {
  Rng rng = make_rng(93);
  const auto X = normal_matrix(50, 3, rng);
  Eigen::VectorXd W(50), Y(50);
  for (int i = 0; i < 50; ++i) {
    W(i) = i % 2;
    Y(i) = X(i, 0) * W(i) + standard_normal(rng);
  }
  const auto D = q_design(X, W);
  CHECK(D.cols() == 7);
  CHECK(D(3, 3) == W(3));
  CHECK(D(3, 5) == W(3) * X(3, 1));
  QLearningOptions o;
  o.lambda_grid = {1e6};
  o.folds = 5;
  const auto q = q_learning_fit(X, W, Y, o);
  CHECK(q.main_effects.cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.interactions.cwiseAbs().maxCoeff() == 0.0);
  const auto acts = q.act(X);
  CHECK(std::all_of(acts.begin(), acts.end(), [&](int a) { return a == acts[0]; }));
  CHECK_THROWS_AS(q_learning_fit(X, Eigen::VectorXd::Ones(50), Y, o), Error);
}

TEST_CASE("Q-learning recovers a strong interaction") {
  Rng rng = make_rng(94);
  const Eigen::Index n = 400;
  const auto X = normal_matrix(n, 5, rng);
  Eigen::VectorXd W(n), Y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    W(i) = uniform01(rng) < 0.5;
    Y(i) = X(i, 1) + W(i) * 2.0 * X(i, 0) + 0.5 * standard_normal(rng);
  }
  const auto q = q_learning_fit(X, W, Y);
  const auto acts = q.act(X);
  int right = 0;
  for (Eigen::Index i = 0; i < n; ++i) right += acts[static_cast<std::size_t>(i)] == (X(i, 0) > 0 ? 1 : 0);
  CHECK(right >= 0.95 * n);
}

TEST_CASE("O-learning with s = 0, R = 1, pi = 0.5 is plain logistic regression") {
  Rng rng = make_rng(95);
  const Eigen::Index n = 100;
  const auto H = normal_matrix(n, 2, rng);
  Eigen::VectorXd A(n);
  for (Eigen::Index i = 0; i < n; ++i) A(i) = uniform01(rng) < sigmoid(1.5 * H(i, 0)) ? 1.0 : -1.0;
  OLearningOptions o;
  o.residualizer = Residualizer::none;
  const auto pol = o_learning_fit(H, A, Eigen::VectorXd::Ones(n), Eigen::VectorXd::Constant(n, 0.5), o);
  // Oracle: gradient descent on sum log(1 + exp(-A f)) + 1e-4 n |b|^2 over standardized H,
  // uniform weights (2 / 0.5 normalized to mean 1).
  Eigen::MatrixXd Z = H.rowwise() - H.colwise().mean();
  Eigen::VectorXd sd(2);
  for (int j = 0; j < 2; ++j) {
    sd(j) = std::sqrt(Z.col(j).squaredNorm() / static_cast<double>(n));
    Z.col(j) /= sd(j);
  }
  const double ridge = 1e-4 * static_cast<double>(n);
  double b0 = 0.0;
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (int it = 0; it < 200000; ++it) {
    double g0 = 0.0;
    Eigen::Vector2d g = 2.0 * ridge * b;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double f = b0 + Z.row(i).dot(b);
      const double s = sigmoid(-A(i) * f);
      g0 -= A(i) * s;
      g -= A(i) * s * Z.row(i).transpose();
    }
    b0 -= 0.02 * g0;
    b -= 0.02 * g;
  }
  const Eigen::Vector2d coef = b.cwiseQuotient(sd);
  CHECK(pol.coefficients(0) == doctest::Approx(coef(0)).epsilon(1e-6));
  CHECK(pol.coefficients(1) == doctest::Approx(coef(1)).epsilon(1e-6));
  CHECK(pol.intercept == doctest::Approx(b0 - H.colwise().mean().dot(coef)).epsilon(1e-6));
}

TEST_CASE("O-learning: planted rule recovery and reward-scale invariance") {
  Rng rng = make_rng(96);
  const Eigen::Index n = 300;
  const auto H = normal_matrix(n, 5, rng);
  Eigen::VectorXd A(n), R(n);
  std::vector<int> optimal(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double best = H(i, 0) + 0.5 * H(i, 1) > 0 ? 1.0 : -1.0;
    optimal[static_cast<std::size_t>(i)] = best > 0;
    A(i) = uniform01(rng) < 0.5 ? 1.0 : -1.0;
    R(i) = (A(i) == best ? 10.0 : 0.0) + 0.1 * standard_normal(rng);
  }
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 0.5);
  const auto pol = o_learning_fit(H, A, R, pi);
  CHECK(policy_accuracy(pol.act(H), optimal) >= 0.95);
  for (double c : {2.0, 0.01, 250.0}) CHECK(o_learning_fit(H, A, (c * R.array()).matrix(), pi).act(H) == pol.act(H));
  OLearningOptions ls;
  ls.residualizer = Residualizer::least_squares;
  const auto pls = o_learning_fit(H, A, R, pi, ls);
  CHECK(o_learning_fit(H, A, 3.0 * R, pi, ls).act(H) == pls.act(H));
}

TEST_CASE("O-learning: zero residuals are degenerate; input checks") {
  Rng rng = make_rng(97);
  const auto H = normal_matrix(30, 2, rng);
  Eigen::VectorXd A(30);
  for (int i = 0; i < 30; ++i) A(i) = i % 2 ? 1.0 : -1.0;
  const auto pol = o_learning_fit(H, A, Eigen::VectorXd::Constant(30, 2.0), Eigen::VectorXd::Constant(30, 0.5));
  CHECK(pol.degenerate);
  CHECK_THROWS_AS(o_learning_fit(H, Eigen::VectorXd::Ones(30) * 0.5, A, Eigen::VectorXd::Constant(30, 0.5)), Error);
  CHECK_THROWS_AS(o_learning_fit(H, A, A, Eigen::VectorXd::Constant(30, 1.0)), Error);
}

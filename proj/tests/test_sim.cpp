#include "doctest.h"
#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/sim.hpp"

using namespace eegpolicy;
using namespace eegpolicy::sim;

namespace {

std::vector<const EffectNode*> leaves_of(const EffectNode& n) {
  if (n.is_leaf()) return {&n};
  auto l = leaves_of(*n.left);
  for (auto* p : leaves_of(*n.right)) l.push_back(p);
  return l;
}

BenchmarkConfig tiny_config() {
  BenchmarkConfig c;
  c.train_sizes = {120, 240};
  c.n_test = 400;
  c.replicates = 2;
  c.forest.params.num_trees = 60;
  c.forest.known_propensity = 0.5;
  return c;
}

}  // namespace

TEST_CASE("default spec layout") {
  const auto s = default_spec();
  CHECK(s.continuous_names.size() == 254);
  CHECK(s.continuous_names.front() == "fp1.open.theta");
  CHECK(s.continuous_names[215].find(".close.alpha") != std::string::npos);
  CHECK(s.continuous_names.back() == "clin38");
  CHECK(s.categoricals.size() == 10);
  CHECK(s.covariance(0, 0) == 1.0);
  CHECK(s.covariance(0, 4) == 0.3);
  CHECK(s.covariance(0, 1) == 0.05);
  const auto ds = generate_dataset(s, 10, 1);
  CHECK(ds.features.X.cols() == 254 + 6 + 4 * 2);
  CHECK(ds.features.column_names.back() == "cat10.2");
  const auto L = leaves_of(s.effect_tree);
  REQUIRE(L.size() == 4);
  CHECK(L[0]->optimal_arm() == 1);
  CHECK(L[1]->optimal_arm() == 0);
  CHECK(L[2]->optimal_arm() == 0);
  CHECK(L[3]->optimal_arm() == 1);
}

TEST_CASE("spec JSON round trip and validation") {
  const auto s = default_spec();
  const auto back = spec_from_json(spec_to_json(s));
  CHECK(back.continuous_names == s.continuous_names);
  CHECK(back.covariance == s.covariance);
  CHECK(generate_dataset(back, 50, 3).features.X == generate_dataset(s, 50, 3).features.X);
  CHECK_THROWS_AS(spec_from_json("{\"noise\": \"poisson\"}"), Error);
  CHECK_THROWS_AS(spec_from_json("{\"categoricals\": [{\"name\": \"x\", \"probs\": [0.5, 0.6]}]}"), Error);
  CHECK_THROWS_AS(spec_from_json("{\"effect_tree\": {\"feature\": \"nope\", \"threshold\": 0, \"left\": {\"mu1\": 1, \"mu0\": 0}, \"right\": {\"mu1\": 0, \"mu0\": 1}}}"), Error);
  CHECK_THROWS_AS(spec_from_json("not json"), Error);
}

TEST_CASE("weakened effects move leaves 0.1 toward each other") {
  const auto strong = default_spec();
  const auto weak = weaken_effects(strong);
  CHECK(weak.effect_size == EffectSize::weak);
  const auto ls = leaves_of(strong.effect_tree), lw = leaves_of(weak.effect_tree);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::abs(std::abs(lw[k]->mu1 - lw[k]->mu0) - (std::abs(ls[k]->mu1 - ls[k]->mu0) - 0.2)) < 1e-12);
    CHECK(lw[k]->optimal_arm() == ls[k]->optimal_arm());
  }
  CHECK(std::abs(lw[0]->mu1 - (ls[0]->mu1 - 0.1)) < 1e-12);
  CHECK(std::abs(lw[0]->mu0 - (ls[0]->mu0 + 0.1)) < 1e-12);
  CHECK(std::abs(lw[1]->mu1 - (ls[1]->mu1 + 0.1)) < 1e-12);
  CHECK_THROWS_AS(weaken_effects(weak), Error);
}

TEST_CASE("generator: deterministic, coupled outcomes, leaf means") {
  const auto s = default_spec();
  const auto a = generate_dataset(s, 20000, 17);
  const auto b = generate_dataset(s, 20000, 17);
  CHECK(a.features.X == b.features.X);
  CHECK(a.features.Y == b.features.Y);
  CHECK_FALSE(generate_dataset(s, 100, 18).features.X == generate_dataset(s, 100, 17).features.X);
  const auto L = leaves_of(s.effect_tree);
  std::vector<double> s1(4), s0(4), cnt(4);
  double treated = 0;
  for (Eigen::Index i = 0; i < a.y0.size(); ++i) {
    const auto k = static_cast<std::size_t>(a.leaf[static_cast<std::size_t>(i)]);
    s1[k] += a.y1(i);
    s0[k] += a.y0(i);
    cnt[k] += 1;
    treated += a.features.W(i);
    const int opt = a.optimal[static_cast<std::size_t>(i)];
    CHECK((opt ? a.y1(i) >= a.y0(i) : a.y0(i) >= a.y1(i)));
  }
  for (std::size_t k = 0; k < 4; ++k) {
    REQUIRE(cnt[k] > 2000);
    const double se1 = std::sqrt(L[k]->mu1 * (1 - L[k]->mu1) / cnt[k]);
    const double se0 = std::sqrt(L[k]->mu0 * (1 - L[k]->mu0) / cnt[k]);
    CHECK(std::abs(s1[k] / cnt[k] - L[k]->mu1) < 4 * se1);
    CHECK(std::abs(s0[k] / cnt[k] - L[k]->mu0) < 4 * se0);
  }
  CHECK(std::abs(treated / 20000.0 - 0.5) < 0.02);
}

TEST_CASE("benchmark: shape, oracle bound, determinism across threads") {
  const auto s = default_spec();
  const auto cfg = tiny_config();
  set_num_threads(1);
  const auto a = run_benchmark(s, cfg);
  set_num_threads(4);
  const auto b = run_benchmark(s, cfg);
  set_num_threads(0);
  CHECK(a.rows.size() == 2 * 2 * 3);
  CHECK(a.rows_csv() == b.rows_csv());
  CHECK(a.long_csv() == b.long_csv());
  CHECK(a.summary_json() == b.summary_json());
  for (const auto& r : a.rows) {
    CHECK_FALSE(r.failed);
    CHECK(r.value <= r.oracle_value);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
  }
  CHECK(a.rows[0].method == Method::policy_tree);
  CHECK(a.rows[3].train_n == 240);
  CHECK(a.mean_oracle(120) == doctest::Approx(a.mean_oracle(240)));
}

TEST_CASE("benchmark config validation and method names") {
  auto cfg = tiny_config();
  cfg.replicates = 0;
  CHECK_THROWS_AS(run_benchmark(default_spec(), cfg), Error);
  for (auto m : {Method::policy_tree, Method::q_learning, Method::o_learning}) CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("magic"), Error);
}

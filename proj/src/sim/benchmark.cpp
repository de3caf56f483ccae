#include <cmath>
#include <sstream>

#include "eegpolicy/csv.hpp"
#include "eegpolicy/effects.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/policy.hpp"
#include "eegpolicy/random.hpp"
#include "eegpolicy/sim.hpp"
#include "json.hpp"

namespace eegpolicy::sim {

using json = nlohmann::json;

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::policy_tree: return "policy_tree";
    case Method::q_learning: return "q_learning";
    case Method::o_learning: return "o_learning";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "policy_tree" || s == "tree") return Method::policy_tree;
  if (s == "q_learning" || s == "qlearn") return Method::q_learning;
  if (s == "o_learning" || s == "olearn") return Method::o_learning;
  throw Error(Errc::domain, "method", "unknown method '" + s + "'");
}

BenchmarkConfig BenchmarkConfig::desk_scale() {
  BenchmarkConfig c;
  c.forest.params.num_trees = 500;
  c.forest.known_propensity = 0.5;
  return c;
}

BenchmarkConfig BenchmarkConfig::full_scale() {
  BenchmarkConfig c;
  c.n_test = 50000;
  c.replicates = 100;
  c.forest.params.num_trees = 2000;
  c.forest.known_propensity = 0.5;
  return c;
}

namespace {

template <class F>
double mean_where(const std::vector<BenchmarkRow>& rows, F pred, double BenchmarkRow::*field) {
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& r : rows)
    if (!r.failed && pred(r)) {
      s += r.*field;
      ++k;
    }
  return k ? s / static_cast<double>(k) : std::nan("");
}

std::vector<int> run_method(Method m, const SimDataset& train, const SimDataset& test, const BenchmarkConfig& cfg,
                            std::uint64_t seed) {
  const auto& X = train.features.X;
  const auto& W = train.features.W;
  const auto& Y = train.features.Y;
  switch (m) {
    case Method::policy_tree: {
      CausalForestOptions opts = cfg.forest;
      opts.params.seed = seed;
      const auto model = fit_causal_forest(X, W, Y, opts);
      const Eigen::VectorXd tau = predict_cate_oob(model);
      const auto scores = doubly_robust_scores(tau, model.e_hat, model.m_hat, W, Y);
      const auto tree = search_policy_tree(X, scores.gamma0, scores.gamma1, train.features.column_names);
      return tree.act(test.features.X);
    }
    case Method::q_learning: {
      QLearningOptions o;
      o.seed = seed;
      return q_learning_fit(X, W, Y, o).act(test.features.X);
    }
    case Method::o_learning: {
      OLearningOptions o;
      o.seed = seed;
      const Eigen::VectorXd A = 2.0 * W.array() - 1.0;
      const Eigen::VectorXd prob = Eigen::VectorXd::Constant(W.size(), 0.5);
      return o_learning_fit(X, A, Y, prob, o).act(test.features.X);
    }
  }
  return {};
}

}  // namespace

double BenchmarkReport::mean_value(Method m, std::size_t n) const {
  return mean_where(rows, [&](const BenchmarkRow& r) { return r.method == m && r.train_n == n; }, &BenchmarkRow::value);
}
double BenchmarkReport::mean_accuracy(Method m, std::size_t n) const {
  return mean_where(rows, [&](const BenchmarkRow& r) { return r.method == m && r.train_n == n; }, &BenchmarkRow::accuracy);
}
double BenchmarkReport::mean_oracle(std::size_t n) const {
  return mean_where(rows, [&](const BenchmarkRow& r) { return r.train_n == n; }, &BenchmarkRow::oracle_value);
}

std::string BenchmarkReport::rows_csv() const {
  std::ostringstream out;
  out << "replicate,train_n,method,value,accuracy,oracle_value,failed,error\n";
  for (const auto& r : rows)
    out << r.replicate << ',' << r.train_n << ',' << to_string(r.method) << ',' << csv::format_double(r.value) << ','
        << csv::format_double(r.accuracy) << ',' << csv::format_double(r.oracle_value) << ',' << (r.failed ? 1 : 0)
        << ',' << csv::escape(r.error) << '\n';
  return out.str();
}

std::string BenchmarkReport::long_csv() const {
  std::ostringstream out;
  out << "effect_size,train_n,method,replicate,metric,value\n";
  for (const auto& r : rows) {
    if (r.failed) continue;
    out << effect_size << ',' << r.train_n << ',' << to_string(r.method) << ',' << r.replicate << ",value,"
        << csv::format_double(r.value) << '\n';
    out << effect_size << ',' << r.train_n << ',' << to_string(r.method) << ',' << r.replicate << ",accuracy,"
        << csv::format_double(r.accuracy) << '\n';
  }
  return out.str();
}

std::string BenchmarkReport::summary_json() const {
  json j;
  j["effect_size"] = effect_size;
  std::vector<std::size_t> sizes;
  std::vector<Method> methods;
  for (const auto& r : rows) {
    if (std::find(sizes.begin(), sizes.end(), r.train_n) == sizes.end()) sizes.push_back(r.train_n);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  json by = json::array();
  for (auto n : sizes) {
    json e;
    e["train_n"] = n;
    e["oracle_value"] = mean_oracle(n);
    json ms = json::object();
    for (auto m : methods) {
      std::size_t failures = 0;
      for (const auto& r : rows) failures += r.failed && r.method == m && r.train_n == n;
      ms[to_string(m)] = {{"mean_value", mean_value(m, n)}, {"mean_accuracy", mean_accuracy(m, n)}, {"failures", failures}};
    }
    e["methods"] = ms;
    by.push_back(e);
  }
  j["results"] = by;
  return j.dump(2);
}

BenchmarkReport run_benchmark(const GeneratorSpec& spec, const BenchmarkConfig& cfg) {
  spec.validate();
  if (cfg.replicates == 0 || cfg.train_sizes.empty() || cfg.methods.empty() || cfg.n_test == 0)
    throw Error(Errc::invalid_argument, "benchmark", "need replicates, train sizes, methods and a test size");
  BenchmarkReport report;
  report.effect_size = spec.effect_size == EffectSize::strong ? "strong" : "weak";
  const std::size_t S = cfg.train_sizes.size(), M = cfg.methods.size();
  std::vector<BenchmarkRow> rows(cfg.replicates * S * M);

  // One job per (replicate, train size); the test set depends only on the replicate.
  parallel_for(cfg.replicates * S, [&](std::size_t job) {
    const std::size_t r = job / S, s = job % S;
    const std::size_t n = cfg.train_sizes[s];
    const auto test = generate_dataset(spec, cfg.n_test, derive_seed(cfg.seed, 1'000'000 + r));
    const auto train = generate_dataset(spec, n, derive_seed(cfg.seed, r * 1000 + s));
    double oracle = 0.0;
    for (Eigen::Index i = 0; i < test.y0.size(); ++i) oracle += std::max(test.y0(i), test.y1(i));
    oracle /= static_cast<double>(test.y0.size());
    for (std::size_t k = 0; k < M; ++k) {
      BenchmarkRow row;
      row.replicate = r;
      row.train_n = n;
      row.method = cfg.methods[k];
      row.oracle_value = oracle;
      try {
        const auto actions = run_method(cfg.methods[k], train, test, cfg, derive_seed(cfg.seed, 5'000'000 + job * 16 + k));
        row.value = estimate_value(actions, test.y0, test.y1);
        row.accuracy = policy_accuracy(actions, test.optimal);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      rows[job * M + k] = row;
    }
  });
  // replicate-major, then train size, then method
  report.rows = std::move(rows);
  return report;
}

}  // namespace eegpolicy::sim

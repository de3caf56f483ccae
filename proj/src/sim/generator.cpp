#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "eegpolicy/error.hpp"
#include "eegpolicy/random.hpp"
#include "eegpolicy/sim.hpp"
#include "eegpolicy/spectral.hpp"
#include "json.hpp"

namespace eegpolicy::sim {

using json = nlohmann::json;

EffectNode::EffectNode(const EffectNode& o)
    : feature(o.feature),
      threshold(o.threshold),
      left(o.left ? std::make_unique<EffectNode>(*o.left) : nullptr),
      right(o.right ? std::make_unique<EffectNode>(*o.right) : nullptr),
      mu1(o.mu1),
      mu0(o.mu0) {}

EffectNode& EffectNode::operator=(const EffectNode& o) {
  if (this != &o) {
    EffectNode copy(o);
    *this = std::move(copy);
  }
  return *this;
}

namespace {

EffectNode leaf(double mu1, double mu0) {
  EffectNode n;
  n.mu1 = mu1;
  n.mu0 = mu0;
  return n;
}

EffectNode split(std::string feature, double threshold, EffectNode l, EffectNode r) {
  EffectNode n;
  n.feature = std::move(feature);
  n.threshold = threshold;
  n.left = std::make_unique<EffectNode>(std::move(l));
  n.right = std::make_unique<EffectNode>(std::move(r));
  return n;
}

void check_tree(const EffectNode& n, const std::vector<std::string>& names) {
  if (n.is_leaf()) {
    if (!std::isfinite(n.mu0) || !std::isfinite(n.mu1)) throw Error(Errc::domain, "effect_tree", "non-finite leaf mean");
    return;
  }
  if (std::find(names.begin(), names.end(), n.feature) == names.end())
    throw Error(Errc::not_found, n.feature, "effect tree splits on an unknown continuous covariate");
  if (!n.left || !n.right) throw Error(Errc::invalid_argument, "effect_tree", "internal node needs two children");
  check_tree(*n.left, names);
  check_tree(*n.right, names);
}

}  // namespace

void GeneratorSpec::validate() const {
  const auto p = static_cast<Eigen::Index>(continuous_names.size());
  if (mean.size() != p) throw Error(Errc::length_mismatch, "mean", "length differs from continuous_names");
  if (covariance.rows() != p || covariance.cols() != p)
    throw Error(Errc::length_mismatch, "covariance", "shape differs from continuous_names");
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) throw Error(Errc::domain, "covariance", "not symmetric");
  for (const auto& c : categoricals) {
    if (c.probs.size() < 2) throw Error(Errc::domain, c.name, "categorical needs at least two levels");
    double s = 0.0;
    for (double v : c.probs) {
      if (!(v >= 0.0)) throw Error(Errc::domain, c.name, "negative probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error(Errc::domain, c.name, "class probabilities must sum to 1");
  }
  if (!(clip_lo >= 0.0 && clip_lo < clip_hi && clip_hi <= 1.0)) throw Error(Errc::domain, "clip", "need 0 <= lo < hi <= 1");
  check_tree(effect_tree, continuous_names);
}

GeneratorSpec default_spec() {
  GeneratorSpec s;
  // EEG names in feature-extraction order; blocks are the four condition x band groups.
  std::vector<int> block;
  for (const auto& ch : common_channels_54())
    for (auto c : {Condition::eyes_open, Condition::eyes_closed})
      for (const char* band : {"theta", "alpha"}) {
        s.continuous_names.push_back(feature_name(ch, c, band));
        block.push_back((c == Condition::eyes_open ? 0 : 2) + (std::string(band) == "theta" ? 0 : 1));
      }
  for (int i = 1; i <= 38; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "clin%02d", i);
    s.continuous_names.emplace_back(buf);
    block.push_back(4);
  }
  const auto p = static_cast<Eigen::Index>(s.continuous_names.size());
  s.mean = Eigen::VectorXd::Zero(p);
  s.covariance.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      s.covariance(i, j) = i == j ? 1.0 : (block[static_cast<std::size_t>(i)] == block[static_cast<std::size_t>(j)] ? 0.3 : 0.05);
  for (int i = 1; i <= 10; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "cat%02d", i);
    CategoricalVariable v;
    v.name = buf;
    if (i <= 6)
      v.probs = {0.5 + 0.05 * (i - 1) / 2.0, 0.5 - 0.05 * (i - 1) / 2.0};
    else
      v.probs = {0.4, 0.35, 0.25};
    s.categoricals.push_back(v);
  }
  s.effect_tree = split("fc2.close.theta", 0.0,
                        split("c1.open.theta", 0.0, leaf(0.65, 0.35), leaf(0.35, 0.65)),
                        split("pz.close.alpha", 0.0, leaf(0.30, 0.60), leaf(0.60, 0.30)));
  return s;
}

namespace {

json tree_to_json(const EffectNode& n) {
  if (n.is_leaf()) return json{{"mu1", n.mu1}, {"mu0", n.mu0}};
  return json{{"feature", n.feature}, {"threshold", n.threshold}, {"left", tree_to_json(*n.left)}, {"right", tree_to_json(*n.right)}};
}

EffectNode tree_from_json(const json& j) {
  if (j.contains("feature"))
    return split(j.at("feature").get<std::string>(), j.at("threshold").get<double>(), tree_from_json(j.at("left")),
                 tree_from_json(j.at("right")));
  return leaf(j.at("mu1").get<double>(), j.at("mu0").get<double>());
}

}  // namespace

std::string spec_to_json(const GeneratorSpec& s) {
  json j;
  j["continuous_names"] = s.continuous_names;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  json cov = json::array();
  for (Eigen::Index i = 0; i < s.covariance.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(s.covariance.cols()));
    for (Eigen::Index k = 0; k < s.covariance.cols(); ++k) row[static_cast<std::size_t>(k)] = s.covariance(i, k);
    cov.push_back(row);
  }
  j["covariance"] = cov;
  json cats = json::array();
  for (const auto& c : s.categoricals) cats.push_back({{"name", c.name}, {"probs", c.probs}});
  j["categoricals"] = cats;
  j["effect_tree"] = tree_to_json(s.effect_tree);
  j["noise"] = s.noise == NoiseModel::bernoulli ? "bernoulli" : "gaussian";
  j["clip"] = {s.clip_lo, s.clip_hi};
  j["gaussian_sd"] = s.gaussian_sd;
  j["effect_size"] = s.effect_size == EffectSize::strong ? "strong" : "weak";
  j["seed"] = s.seed;
  return j.dump(1);
}

GeneratorSpec spec_from_json(const std::string& text) {
  GeneratorSpec s = default_spec();
  try {
    const json j = json::parse(text);
    if (j.contains("continuous_names")) s.continuous_names = j["continuous_names"].get<std::vector<std::string>>();
    const auto p = static_cast<Eigen::Index>(s.continuous_names.size());
    if (j.contains("mean")) {
      const auto m = j["mean"].get<std::vector<double>>();
      s.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    } else if (s.mean.size() != p) {
      s.mean = Eigen::VectorXd::Zero(p);
    }
    if (j.contains("covariance")) {
      const auto rows = j["covariance"].get<std::vector<std::vector<double>>>();
      s.covariance.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw Error(Errc::length_mismatch, "covariance", "ragged matrix");
        for (std::size_t k = 0; k < rows[i].size(); ++k)
          s.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
      }
    } else if (s.covariance.rows() != p) {
      s.covariance = Eigen::MatrixXd::Identity(p, p);
    }
    if (j.contains("categoricals")) {
      s.categoricals.clear();
      for (const auto& c : j["categoricals"])
        s.categoricals.push_back({c.at("name").get<std::string>(), c.at("probs").get<std::vector<double>>()});
    }
    if (j.contains("effect_tree")) s.effect_tree = tree_from_json(j["effect_tree"]);
    if (j.contains("noise")) {
      const auto n = j["noise"].get<std::string>();
      if (n == "bernoulli") s.noise = NoiseModel::bernoulli;
      else if (n == "gaussian") s.noise = NoiseModel::gaussian;
      else throw Error(Errc::domain, "noise", "expected bernoulli or gaussian");
    }
    if (j.contains("clip")) {
      const auto c = j["clip"].get<std::vector<double>>();
      if (c.size() != 2) throw Error(Errc::domain, "clip", "expected [lo, hi]");
      s.clip_lo = c[0];
      s.clip_hi = c[1];
    }
    s.gaussian_sd = j.value("gaussian_sd", s.gaussian_sd);
    if (j.contains("effect_size")) {
      const auto e = j["effect_size"].get<std::string>();
      if (e == "strong") s.effect_size = EffectSize::strong;
      else if (e == "weak") s.effect_size = EffectSize::weak;
      else throw Error(Errc::domain, "effect_size", "expected strong or weak");
    }
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, "spec", e.what());
  }
  s.validate();
  return s;
}

GeneratorSpec weaken_effects(const GeneratorSpec& strong) {
  if (strong.effect_size != EffectSize::strong)
    throw Error(Errc::invalid_argument, "effect_size", "weaken_effects expects the strong variant");
  GeneratorSpec weak = strong;
  std::function<void(EffectNode&)> shift = [&](EffectNode& n) {
    if (!n.is_leaf()) {
      shift(*n.left);
      shift(*n.right);
      return;
    }
    const double d = n.optimal_arm() == 1 ? 0.1 : -0.1;
    n.mu1 -= d;
    n.mu0 += d;
  };
  shift(weak.effect_tree);
  weak.effect_size = EffectSize::weak;
  return weak;
}

SimDataset generate_dataset(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  const auto p = static_cast<Eigen::Index>(spec.continuous_names.size());
  Eigen::LLT<Eigen::MatrixXd> llt(spec.covariance);
  if (llt.info() != Eigen::Success) {
    llt.compute(spec.covariance + 1e-10 * Eigen::MatrixXd::Identity(p, p));
    if (llt.info() != Eigen::Success) throw Error(Errc::domain, "covariance", "not positive semidefinite");
  }
  const Eigen::MatrixXd L = llt.matrixL();

  // Column layout: continuous, then one-hot categoricals (reference level dropped).
  std::vector<std::string> names = spec.continuous_names;
  std::vector<ColumnKind> kinds(names.size(), ColumnKind::continuous);
  for (const auto& c : spec.categoricals)
    for (std::size_t lvl = 1; lvl < c.probs.size(); ++lvl) {
      names.push_back(c.name + "." + std::to_string(lvl));
      kinds.push_back(ColumnKind::categorical);
    }
  const auto N = static_cast<Eigen::Index>(n);
  SimDataset ds;
  auto& fm = ds.features;
  fm.column_names = names;
  fm.column_kinds = kinds;
  fm.X = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(names.size()));
  fm.W.resize(N);
  fm.Y.resize(N);
  ds.y0.resize(N);
  ds.y1.resize(N);
  ds.mu0.resize(N);
  ds.mu1.resize(N);
  ds.tau.resize(N);
  ds.optimal.resize(n);
  ds.leaf.resize(n);

  // Leaf numbering in left-to-right order.
  std::vector<const EffectNode*> leaves;
  std::function<void(const EffectNode&)> collect = [&](const EffectNode& nd) {
    if (nd.is_leaf()) leaves.push_back(&nd);
    else {
      collect(*nd.left);
      collect(*nd.right);
    }
  };
  collect(spec.effect_tree);

  Rng rng = make_rng(seed, 0);
  Eigen::MatrixXd Zn(N, p);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index k = 0; k < p; ++k) Zn(i, k) = standard_normal(rng);
  fm.X.leftCols(p) = (Zn * L.transpose()).rowwise() + spec.mean.transpose();

  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Index col = p;
    for (const auto& c : spec.categoricals) {
      const double u = uniform01(rng);
      std::size_t lvl = 0;
      double acc = c.probs[0];
      while (lvl + 1 < c.probs.size() && u >= acc) acc += c.probs[++lvl];
      if (lvl > 0) fm.X(i, col + static_cast<Eigen::Index>(lvl) - 1) = 1.0;
      col += static_cast<Eigen::Index>(c.probs.size()) - 1;
    }
    const double w = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    const double shared = spec.noise == NoiseModel::bernoulli ? uniform01(rng) : standard_normal(rng);

    const EffectNode* nd = &spec.effect_tree;
    while (!nd->is_leaf()) {
      const auto it = std::find(spec.continuous_names.begin(), spec.continuous_names.end(), nd->feature);
      const auto j = static_cast<Eigen::Index>(it - spec.continuous_names.begin());
      nd = fm.X(i, j) <= nd->threshold ? nd->left.get() : nd->right.get();
    }
    const auto k = static_cast<std::size_t>(i);
    ds.leaf[k] = static_cast<int>(std::find(leaves.begin(), leaves.end(), nd) - leaves.begin());
    ds.mu1(i) = nd->mu1;
    ds.mu0(i) = nd->mu0;
    ds.tau(i) = nd->mu1 - nd->mu0;
    ds.optimal[k] = nd->optimal_arm();
    if (spec.noise == NoiseModel::bernoulli) {
      const double p1 = std::clamp(nd->mu1, spec.clip_lo, spec.clip_hi);
      const double p0 = std::clamp(nd->mu0, spec.clip_lo, spec.clip_hi);
      ds.y1(i) = shared < p1 ? 1.0 : 0.0;
      ds.y0(i) = shared < p0 ? 1.0 : 0.0;
    } else {
      ds.y1(i) = nd->mu1 + spec.gaussian_sd * shared;
      ds.y0(i) = nd->mu0 + spec.gaussian_sd * shared;
    }
    fm.W(i) = w;
    fm.Y(i) = w == 1.0 ? ds.y1(i) : ds.y0(i);
    char id[24];
    std::snprintf(id, sizeof id, "sim%07zu", k + 1);
    fm.subject_ids.emplace_back(id);
  }
  return ds;
}

}  // namespace eegpolicy::sim

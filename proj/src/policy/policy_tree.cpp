#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/policy.hpp"
#include "json.hpp"

namespace eegpolicy {

using json = nlohmann::json;

int PolicyTreeModel::act(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf())
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                        : nodes[i].right);
  return nodes[i].action;
}

std::vector<int> PolicyTreeModel::act(const Eigen::MatrixXd& X) const {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const Eigen::VectorXd row = X.row(r).transpose();
    out[static_cast<std::size_t>(r)] = act(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return out;
}

int PolicyTreeModel::depth() const {
  std::function<int(int)> rec = [&](int i) -> int {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    return n.is_leaf() ? 0 : 1 + std::max(rec(n.left), rec(n.right));
  };
  return nodes.empty() ? 0 : rec(0);
}

std::size_t PolicyTreeModel::num_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const PolicyNode& n) { return n.is_leaf(); }));
}

double policy_objective(const std::vector<int>& actions, const Eigen::VectorXd& g0, const Eigen::VectorXd& g1) {
  if (actions.size() != static_cast<std::size_t>(g0.size()) || g0.size() != g1.size())
    throw Error(Errc::length_mismatch, "actions", "length differs from scores");
  double s = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) s += actions[i] ? g1(static_cast<Eigen::Index>(i)) : g0(static_cast<Eigen::Index>(i));
  return s;
}

namespace {

// Sum / max prefix / min prefix over ranks; prefixes end at a rank.
struct Seg {
  std::vector<double> sum, maxpre, minpre;
  std::size_t size = 1;

  explicit Seg(std::size_t m) {
    while (size < m) size <<= 1;
    sum.assign(2 * size, 0.0);
    maxpre.assign(2 * size, 0.0);
    minpre.assign(2 * size, 0.0);
  }
  void add(std::size_t rank, double v) {
    std::size_t i = rank + size;
    sum[i] += v;
    maxpre[i] = sum[i];
    minpre[i] = sum[i];
    for (i >>= 1; i >= 1; i >>= 1) {
      const std::size_t l = 2 * i, r = 2 * i + 1;
      sum[i] = sum[l] + sum[r];
      maxpre[i] = std::max(maxpre[l], sum[l] + maxpre[r]);
      minpre[i] = std::min(minpre[l], sum[l] + minpre[r]);
    }
  }
  // Best gain of a depth <= 1 subtree over D = gamma1 - gamma0 relative to all-control.
  double gain() const {
    const double t = sum[1];
    return std::max({0.0, t, maxpre[1], t - minpre[1]});
  }
};

struct Leafy {
  int feature = -1;
  double threshold = 0.0;
  int left_action = 0, right_action = 0;
  int action = 0;  // when no split
  double gain = 0.0;
};

// Exact best depth <= 1 tree on a subset (value relative to all-control).
Leafy best_stump(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows, const Eigen::VectorXd& D) {
  Leafy best;
  double total = 0.0;
  for (auto r : rows) total += D(static_cast<Eigen::Index>(r));
  best.action = total > 0.0 ? 1 : 0;
  best.gain = std::max(0.0, total);
  std::vector<std::size_t> sorted(rows);
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    std::stable_sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });
    double pre = 0.0;
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      pre += D(static_cast<Eigen::Index>(sorted[k]));
      const double xv = X(sorted[k], f), xn = X(sorted[k + 1], f);
      if (!(xv < xn)) continue;
      const double gl = std::max(0.0, pre), gr = std::max(0.0, total - pre);
      if (gl + gr > best.gain) {
        best.gain = gl + gr;
        best.feature = static_cast<int>(f);
        best.threshold = xv + (xn - xv) / 2.0;
        best.left_action = pre > 0.0 ? 1 : 0;
        best.right_action = total - pre > 0.0 ? 1 : 0;
      }
    }
  }
  return best;
}

struct RootChoice {
  double value = -std::numeric_limits<double>::infinity();
  int feature = -1;
  std::size_t position = 0;  // split after this index in the feature's sort order
};

}  // namespace

PolicyTreeModel search_policy_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& g0, const Eigen::VectorXd& g1,
                                   const std::vector<std::string>& names) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto d = static_cast<std::size_t>(X.cols());
  if (g0.size() != X.rows() || g1.size() != X.rows()) throw Error(Errc::length_mismatch, "scores", "length differs from X rows");
  if (n < 1 || d < 1) throw Error(Errc::invalid_argument, "X", "empty design");
  if (!names.empty() && names.size() != d) throw Error(Errc::length_mismatch, "feature_names", "count differs from columns");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(g0(static_cast<Eigen::Index>(i))) || !std::isfinite(g1(static_cast<Eigen::Index>(i))))
      throw Error(Errc::domain, "scores", "non-finite score at row " + std::to_string(i));
  const Eigen::VectorXd D = g1 - g0;

  // Per feature: sort order and dense rank of each row.
  std::vector<std::vector<std::size_t>> order(d);
  std::vector<std::vector<std::size_t>> rank(d, std::vector<std::size_t>(n));
  std::vector<std::size_t> levels(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& o = order[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0);
    const auto fi = static_cast<Eigen::Index>(f);
    std::stable_sort(o.begin(), o.end(), [&](auto a, auto b) { return X(a, fi) < X(b, fi); });
    std::size_t r = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0 && X(o[k - 1], fi) < X(o[k], fi)) ++r;
      rank[f][o[k]] = r;
    }
    levels[f] = r + 1;
  }

  std::vector<RootChoice> per_feature(d);
  parallel_for(d, [&](std::size_t f1) {
    const auto& o = order[f1];
    const auto fi = static_cast<Eigen::Index>(f1);
    // valid root split positions: between distinct values
    std::vector<double> left_best(n, 0.0), right_best(n, 0.0);
    for (std::size_t f2 = 0; f2 < d; ++f2) {
      Seg left(levels[f2]), right(levels[f2]);
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left.add(rank[f2][o[k]], D(static_cast<Eigen::Index>(o[k])));
        left_best[k] = std::max(left_best[k], left.gain());
      }
      for (std::size_t k = n - 1; k >= 1; --k) {
        right.add(rank[f2][o[k]], D(static_cast<Eigen::Index>(o[k])));
        right_best[k - 1] = std::max(right_best[k - 1], right.gain());
      }
    }
    RootChoice best;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (!(X(o[k], fi) < X(o[k + 1], fi))) continue;
      const double v = left_best[k] + right_best[k];
      if (v > best.value) best = {v, static_cast<int>(f1), k};
    }
    per_feature[f1] = best;
  });

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Leafy stump = best_stump(X, all, D);
  RootChoice root;
  for (const auto& c : per_feature)
    if (c.feature >= 0 && c.value > root.value) root = c;

  PolicyTreeModel model;
  model.feature_names = names;
  auto leaf = [](int a) { PolicyNode p; p.action = a; return p; };
  auto add_stump = [&](const Leafy& s) -> int {
    const int id = static_cast<int>(model.nodes.size());
    if (s.feature < 0 || s.left_action == s.right_action) {
      model.nodes.push_back(leaf(s.feature < 0 ? s.action : s.left_action));
      return id;
    }
    PolicyNode p;
    p.feature = s.feature;
    p.threshold = s.threshold;
    model.nodes.push_back(p);
    const int l = static_cast<int>(model.nodes.size());
    model.nodes.push_back(leaf(s.left_action));
    model.nodes.push_back(leaf(s.right_action));
    model.nodes[static_cast<std::size_t>(id)].left = l;
    model.nodes[static_cast<std::size_t>(id)].right = l + 1;
    return id;
  };

  // A depth-2 tree must strictly beat the best shallower tree.
  if (root.feature < 0 || !(root.value > stump.gain)) {
    add_stump(stump);
  } else {
    const auto f = static_cast<std::size_t>(root.feature);
    const auto fi = static_cast<Eigen::Index>(f);
    const double thr = X(order[f][root.position], fi) +
                       (X(order[f][root.position + 1], fi) - X(order[f][root.position], fi)) / 2.0;
    std::vector<std::size_t> lrows, rrows;
    for (std::size_t i = 0; i < n; ++i) (X(static_cast<Eigen::Index>(i), fi) <= thr ? lrows : rrows).push_back(i);
    std::sort(lrows.begin(), lrows.end());
    std::sort(rrows.begin(), rrows.end());
    const Leafy ls = best_stump(X, lrows, D);
    const Leafy rs = best_stump(X, rrows, D);
    PolicyNode p;
    p.feature = root.feature;
    p.threshold = thr;
    model.nodes.push_back(p);
    const int l = add_stump(ls);
    const int r = add_stump(rs);
    model.nodes[0].left = l;
    model.nodes[0].right = r;
    // collapse a root whose children are the same constant action
    const auto& ln = model.nodes[static_cast<std::size_t>(l)];
    const auto& rn = model.nodes[static_cast<std::size_t>(r)];
    if (ln.is_leaf() && rn.is_leaf() && ln.action == rn.action) {
      const int a = ln.action;
      model.nodes.assign(1, leaf(a));
    }
  }
  model.objective = policy_objective(model.act(X), g0, g1);
  return model;
}

namespace {

json node_json(const PolicyTreeModel& t, int i) {
  const auto& n = t.nodes[static_cast<std::size_t>(i)];
  json j;
  if (n.is_leaf()) {
    j["action"] = n.action;
    return j;
  }
  j["split_feature"] = t.feature_names.empty() ? json(n.feature) : json(t.feature_names[static_cast<std::size_t>(n.feature)]);
  j["feature_index"] = n.feature;
  j["threshold"] = n.threshold;
  j["left"] = node_json(t, n.left);
  j["right"] = node_json(t, n.right);
  return j;
}

int node_from_json(PolicyTreeModel& t, const json& j) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("action") && !j.contains("split_feature")) {
    const int a = j["action"].get<int>();
    if (a != 0 && a != 1) throw Error(Errc::domain, "action", "must be 0 or 1");
    t.nodes[static_cast<std::size_t>(id)].action = a;
    return id;
  }
  PolicyNode p;
  p.feature = j.at("feature_index").get<int>();
  p.threshold = j.at("threshold").get<double>();
  t.nodes[static_cast<std::size_t>(id)] = p;
  const int l = node_from_json(t, j.at("left"));
  const int r = node_from_json(t, j.at("right"));
  t.nodes[static_cast<std::size_t>(id)].left = l;
  t.nodes[static_cast<std::size_t>(id)].right = r;
  return id;
}

}  // namespace

std::string policy_tree_to_json(const PolicyTreeModel& t) {
  json j;
  j["method"] = "tree";
  j["objective"] = t.objective;
  j["feature_names"] = t.feature_names;
  j["tree"] = node_json(t, 0);
  return j.dump(2);
}

PolicyTreeModel policy_tree_from_json(const std::string& text) {
  PolicyTreeModel t;
  try {
    const json j = json::parse(text);
    t.objective = j.value("objective", 0.0);
    t.feature_names = j.value("feature_names", std::vector<std::string>{});
    node_from_json(t, j.at("tree"));
  } catch (const json::exception& e) {
    throw Error(Errc::parse, "policy", e.what());
  }
  return t;
}

}  // namespace eegpolicy

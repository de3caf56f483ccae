#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "causal_forest/grow.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/random.hpp"

namespace eegpolicy {

std::size_t ForestParams::resolved_mtry(std::size_t d) const {
  if (d == 0) return 0;
  const std::size_t m = mtry ? mtry : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  return std::min(m, d);
}

void ForestParams::validate() const {
  if (num_trees < 1) throw Error(Errc::domain, "num_trees", "need at least one tree");
  if (!(subsample_ratio > 0.0 && subsample_ratio <= 1.0))
    throw Error(Errc::domain, "subsample_ratio", "must lie in (0, 1]");
  if (!(honesty_ratio > 0.0 && honesty_ratio < 1.0))
    throw Error(Errc::domain, "honesty_ratio", "must lie in (0, 1)");
  if (min_node_size < 1) throw Error(Errc::domain, "min_node_size", "must be at least 1");
}

std::size_t Tree::leaf_of(std::span<const double> x) const {
  std::size_t node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& nd = nodes[node];
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
  }
  return node;
}

std::size_t Tree::leaf_of(const Eigen::MatrixXd& X, Eigen::Index row) const {
  std::size_t node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& nd = nodes[node];
    node = static_cast<std::size_t>(X(row, nd.feature) <= nd.threshold ? nd.left : nd.right);
  }
  return node;
}

bool Tree::in_subsample(std::uint32_t i) const {
  return std::binary_search(grow_samples.begin(), grow_samples.end(), i) ||
         std::binary_search(estimate_samples.begin(), estimate_samples.end(), i);
}

std::size_t Tree::num_splits() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

namespace detail {

namespace {

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct Grower {
  const GrowInput& in;
  const ForestParams& params;
  Rng& rng;
  std::size_t mtry;
  std::vector<TreeNode> nodes;

  // Sweep one feature over the node's rows sorted by value.
  void scan_feature(const std::vector<std::uint32_t>& rows, int f, Candidate& best) const {
    const auto& X = *in.X;
    std::vector<std::uint32_t> sorted(rows);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
    const std::size_t n = sorted.size();
    const std::size_t min_size = params.min_node_size;
    if (in.rule == SplitRule::regression) {
      double total = 0.0;
      for (auto r : sorted) total += in.target[r];
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left += in.target[sorted[k]];
        const double xv = X(sorted[k], f), xn = X(sorted[k + 1], f);
        if (!(xv < xn)) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < min_size || nr < min_size) continue;
        const double ml = left / static_cast<double>(nl);
        const double mr = (total - left) / static_cast<double>(nr);
        const double gain = static_cast<double>(nl) * static_cast<double>(nr) / static_cast<double>(n) * (ml - mr) * (ml - mr);
        if (gain > best.gain) best = {gain, f, xv + (xn - xv) / 2.0};
      }
    } else {
      double syw = 0.0, sww = 0.0;
      std::size_t treated = 0;
      for (auto r : sorted) {
        syw += in.y_res[r] * in.w_res[r];
        sww += in.w_res[r] * in.w_res[r];
        treated += in.arm[r] > 0.5;
      }
      const std::size_t control = n - treated;
      double lyw = 0.0, lww = 0.0;
      std::size_t lt = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto r = sorted[k];
        lyw += in.y_res[r] * in.w_res[r];
        lww += in.w_res[r] * in.w_res[r];
        lt += in.arm[r] > 0.5;
        const double xv = X(r, f), xn = X(sorted[k + 1], f);
        if (!(xv < xn)) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        const std::size_t lc = nl - lt;
        if (lt < min_size || lc < min_size || treated - lt < min_size || control - lc < min_size) continue;
        const double rww = sww - lww;
        if (!(lww > 0.0) || !(rww > 0.0)) continue;
        const double tl = lyw / lww, tr = (syw - lyw) / rww;
        const double gain = static_cast<double>(nl) * static_cast<double>(nr) / static_cast<double>(n) * (tl - tr) * (tl - tr);
        if (gain > best.gain) best = {gain, f, xv + (xn - xv) / 2.0};
      }
    }
  }

  int grow(const std::vector<std::uint32_t>& rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{-1, 0.0, -1, -1, depth});
    if (params.max_depth && static_cast<std::size_t>(depth) >= *params.max_depth) return id;
    if (rows.size() < 2 * params.min_node_size) return id;

    const auto d = static_cast<std::size_t>(in.X->cols());
    auto perm = random_permutation(d, rng);
    std::vector<int> features(perm.begin(), perm.begin() + static_cast<long>(mtry));
    std::sort(features.begin(), features.end());
    Candidate best;
    // Strict improvement keeps the lowest feature index, then the lowest threshold.
    for (int f : features) scan_feature(rows, f, best);
    if (best.feature < 0) return id;

    std::vector<std::uint32_t> left, right;
    for (auto r : rows) ((*in.X)(r, best.feature) <= best.threshold ? left : right).push_back(r);
    nodes[static_cast<std::size_t>(id)].feature = best.feature;
    nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    const int r = grow(right, depth + 1);
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  bool leaf_ok(const std::vector<std::uint32_t>& rows) const {
    if (in.rule == SplitRule::regression) return !rows.empty();
    std::size_t treated = 0;
    for (auto r : rows) treated += in.arm[r] > 0.5;
    return treated >= params.min_node_size && rows.size() - treated >= params.min_node_size;
  }

  // Collapses splits whose estimation leaves would break the leaf-size rule.
  bool prune(int id, const std::vector<std::uint32_t>& rows) {
    auto& nd = nodes[static_cast<std::size_t>(id)];
    if (nd.is_leaf()) return leaf_ok(rows);
    std::vector<std::uint32_t> left, right;
    for (auto r : rows) ((*in.X)(r, nd.feature) <= nd.threshold ? left : right).push_back(r);
    const int l = nd.left, rr = nd.right;
    const bool ok_l = prune(l, left);
    const bool ok_r = prune(rr, right);
    if (!(ok_l && ok_r)) {
      auto& n2 = nodes[static_cast<std::size_t>(id)];
      n2.feature = -1;
      n2.threshold = 0.0;
      n2.left = n2.right = -1;
      return leaf_ok(rows);
    }
    return true;
  }
};

}  // namespace

Tree grow_tree(const GrowInput& in, const ForestParams& params, std::uint64_t stream) {
  Rng rng = make_rng(params.seed, stream);
  std::vector<std::uint32_t> all;
  if (in.rows) {
    all = *in.rows;
  } else {
    all.resize(static_cast<std::size_t>(in.X->rows()));
    std::iota(all.begin(), all.end(), 0u);
  }
  const std::size_t n = all.size();
  const auto sub = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(params.subsample_ratio * static_cast<double>(n))));
  const auto perm = random_permutation(n, rng);
  const auto n_grow = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(params.honesty_ratio * static_cast<double>(std::min(sub, n)))));

  Tree tree;
  for (std::size_t k = 0; k < std::min(sub, n); ++k)
    (k < n_grow ? tree.grow_samples : tree.estimate_samples).push_back(all[perm[k]]);
  std::sort(tree.grow_samples.begin(), tree.grow_samples.end());
  std::sort(tree.estimate_samples.begin(), tree.estimate_samples.end());

  Grower g{in, params, rng, params.resolved_mtry(static_cast<std::size_t>(in.X->cols())), {}};
  g.grow(tree.grow_samples, 0);
  g.prune(0, tree.estimate_samples);

  // Compact to the reachable nodes, preorder.
  std::vector<TreeNode> compact;
  std::function<int(int)> copy = [&](int id) -> int {
    const int nid = static_cast<int>(compact.size());
    compact.push_back(g.nodes[static_cast<std::size_t>(id)]);
    if (!g.nodes[static_cast<std::size_t>(id)].is_leaf()) {
      const int l = copy(g.nodes[static_cast<std::size_t>(id)].left);
      compact[static_cast<std::size_t>(nid)].left = l;
      const int r = copy(g.nodes[static_cast<std::size_t>(id)].right);
      compact[static_cast<std::size_t>(nid)].right = r;
    }
    return nid;
  };
  copy(0);
  tree.nodes = std::move(compact);
  tree.leaf_samples.assign(tree.nodes.size(), {});
  for (auto r : tree.estimate_samples) tree.leaf_samples[tree.leaf_of(*in.X, r)].push_back(r);
  return tree;
}

}  // namespace detail
}  // namespace eegpolicy

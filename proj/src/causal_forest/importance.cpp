#include <algorithm>
#include <numeric>

#include "eegpolicy/error.hpp"
#include "eegpolicy/forest.hpp"

namespace eegpolicy {

ImportanceReport variable_importance(std::span<const Tree> trees, std::size_t num_features, std::size_t max_depth) {
  if (max_depth < 1) throw Error(Errc::domain, "max_depth", "must be at least 1");
  // counts[l][j]: splits on feature j at layer l + 1
  std::vector<std::vector<double>> counts(max_depth, std::vector<double>(num_features, 0.0));
  std::size_t deepest = 0;
  for (const auto& t : trees)
    for (const auto& nd : t.nodes) {
      if (nd.is_leaf()) continue;
      const auto layer = static_cast<std::size_t>(nd.depth);
      if (layer >= max_depth) continue;
      if (static_cast<std::size_t>(nd.feature) >= num_features)
        throw Error(Errc::invalid_argument, "num_features", "split on a feature index beyond num_features");
      counts[layer][static_cast<std::size_t>(nd.feature)] += 1.0;
      deepest = std::max(deepest, layer + 1);
    }
  if (deepest == 0) throw Error(Errc::degenerate, "forest", "forest has no splits");

  ImportanceReport rep;
  rep.max_depth_used = deepest;
  rep.importance.assign(num_features, 0.0);
  double norm = 0.0;
  for (std::size_t l = 1; l <= deepest; ++l) {
    const double w = 1.0 / static_cast<double>(l * l);
    norm += w;
    const double total = std::accumulate(counts[l - 1].begin(), counts[l - 1].end(), 0.0);
    if (total == 0.0) continue;
    for (std::size_t j = 0; j < num_features; ++j) rep.importance[j] += counts[l - 1][j] / total * w;
  }
  for (double& v : rep.importance) v /= norm;
  rep.ranking.resize(num_features);
  std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return rep.importance[a] > rep.importance[b]; });
  return rep;
}

}  // namespace eegpolicy

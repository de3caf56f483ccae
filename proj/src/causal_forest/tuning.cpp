#include "eegpolicy/error.hpp"
#include "eegpolicy/forest.hpp"

namespace eegpolicy {

std::vector<ForestParams> TuningGrid::expand(const ForestParams& base) const {
  const std::vector<std::size_t> mt = mtry.empty() ? std::vector<std::size_t>{base.mtry} : mtry;
  const std::vector<std::size_t> mn = min_node_size.empty() ? std::vector<std::size_t>{base.min_node_size} : min_node_size;
  const std::vector<double> ss = subsample_ratio.empty() ? std::vector<double>{base.subsample_ratio} : subsample_ratio;
  std::vector<ForestParams> out;
  for (auto a : mt)
    for (auto b : mn)
      for (auto c : ss) {
        ForestParams p = base;
        p.mtry = a;
        p.min_node_size = b;
        p.subsample_ratio = c;
        out.push_back(p);
      }
  return out;
}

double r_loss(const CausalForestModel& m, const Eigen::VectorXd& tau) {
  if (tau.size() != m.Y.size()) throw Error(Errc::length_mismatch, "tau", "length differs from training rows");
  const Eigen::VectorXd r = m.y_residual() - tau.cwiseProduct(m.w_residual());
  return r.squaredNorm() / static_cast<double>(r.size());
}

TuningResult tune_r_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& W, const Eigen::VectorXd& Y,
                         const TuningGrid& grid, const CausalForestOptions& base) {
  TuningResult res;
  res.candidates = grid.expand(base.params);
  if (res.candidates.empty()) throw Error(Errc::invalid_argument, "grid", "empty tuning grid");
  // Nuisances are shared so the comparison isolates the forest settings.
  const auto nu = cross_fit_nuisances(X, W, Y, base);
  for (const auto& p : res.candidates) {
    const auto model = fit_causal_forest(X, W, Y, nu, p, base.propensity_clip);
    res.r_loss.push_back(r_loss(model, predict_cate_oob(model)));
  }
  for (std::size_t i = 1; i < res.candidates.size(); ++i) {
    const double a = res.r_loss[i], b = res.r_loss[res.best_index];
    if (a < b || (a == b && res.candidates[i].min_node_size > res.candidates[res.best_index].min_node_size))
      res.best_index = i;
  }
  res.best = res.candidates[res.best_index];
  return res;
}

}  // namespace eegpolicy

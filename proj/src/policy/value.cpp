#include <cmath>
#include <set>

#include "eegpolicy/error.hpp"
#include "eegpolicy/policy.hpp"

namespace eegpolicy {

double estimate_value(const std::vector<int>& actions, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1) {
  if (actions.empty()) throw Error(Errc::invalid_argument, "actions", "empty policy");
  return policy_objective(actions, y0, y1) / static_cast<double>(actions.size());
}

ValueEstimate estimate_value_dr(const std::vector<int>& actions, const DoublyRobustScores& s,
                                const std::vector<std::string>& eval_ids, const std::vector<std::string>& train_ids) {
  if (actions.size() != s.size()) throw Error(Errc::length_mismatch, "actions", "length differs from scores");
  if (actions.empty()) throw Error(Errc::invalid_argument, "actions", "empty policy");
  const auto n = static_cast<double>(actions.size());
  ValueEstimate v;
  std::vector<double> g(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    g[i] = actions[i] ? s.gamma1(static_cast<Eigen::Index>(i)) : s.gamma0(static_cast<Eigen::Index>(i));
    v.value += g[i];
  }
  v.value /= n;
  double ss = 0.0;
  for (double x : g) ss += (x - v.value) * (x - v.value);
  v.standard_error = actions.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  const std::set<std::string> train(train_ids.begin(), train_ids.end());
  for (const auto& id : eval_ids)
    if (train.count(id)) v.ids_overlap = true;
  return v;
}

double policy_accuracy(const std::vector<int>& actions, const std::vector<int>& optimal) {
  if (actions.size() != optimal.size()) throw Error(Errc::length_mismatch, "optimal", "length differs from actions");
  if (actions.empty()) throw Error(Errc::invalid_argument, "actions", "empty policy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) hit += actions[i] == optimal[i];
  return static_cast<double>(hit) / static_cast<double>(actions.size());
}

}  // namespace eegpolicy

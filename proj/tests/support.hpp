#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "eegpolicy/eeg_io.hpp"
#include "eegpolicy/random.hpp"

namespace testsupport {

using eegpolicy::Rng;

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "eegpolicy_tests" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = eegpolicy::standard_normal(rng);
  return X;
}

// ---- policy-tree oracle -------------------------------------------------------

// Midpoints between consecutive distinct values of column j.
inline std::vector<double> midpoints(const Eigen::MatrixXd& X, Eigen::Index j) {
  std::vector<double> v(X.col(j).data(), X.col(j).data() + X.rows());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> out;
  for (std::size_t k = 1; k < v.size(); ++k) out.push_back(0.5 * (v[k - 1] + v[k]));
  return out;
}

struct ScoreSums {
  double g0 = 0.0, g1 = 0.0;
  double best() const { return std::max(g0, g1); }
};

inline ScoreSums sums(const std::vector<int>& rows, const Eigen::VectorXd& g0, const Eigen::VectorXd& g1) {
  ScoreSums s;
  for (int i : rows) {
    s.g0 += g0(i);
    s.g1 += g1(i);
  }
  return s;
}

inline void split_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows, Eigen::Index j, double t,
                       std::vector<int>& left, std::vector<int>& right) {
  left.clear();
  right.clear();
  for (int i : rows) (X(i, j) <= t ? left : right).push_back(i);
}

// Best depth <= 1 subtree on `rows`: a constant action or any stump.
inline double best_subtree1(const Eigen::MatrixXd& X, const std::vector<int>& rows, const Eigen::VectorXd& g0,
                            const Eigen::VectorXd& g1) {
  double best = sums(rows, g0, g1).best();
  std::vector<int> l, r;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (double t : midpoints(X, j)) {
      split_rows(X, rows, j, t, l, r);
      best = std::max(best, sums(l, g0, g1).best() + sums(r, g0, g1).best());
    }
  return best;
}

// Exhaustive maximum over all depth <= 2 trees. The two subtrees of a root split
// are independent, so each is maximized on its own rows.
inline double brute_force_policy(const Eigen::MatrixXd& X, const Eigen::VectorXd& g0, const Eigen::VectorXd& g1) {
  std::vector<int> all(static_cast<std::size_t>(X.rows()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  double best = best_subtree1(X, all, g0, g1);
  std::vector<int> l, r;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (double t : midpoints(X, j)) {
      split_rows(X, all, j, t, l, r);
      best = std::max(best, best_subtree1(X, l, g0, g1) + best_subtree1(X, r, g0, g1));
    }
  return best;
}

// Literal enumeration of every (root, left split, right split, 4 actions) tree.
// Only for tiny instances; used to confirm the decomposed oracle.
inline double literal_enumeration(const Eigen::MatrixXd& X, const Eigen::VectorXd& g0, const Eigen::VectorXd& g1) {
  struct Split {
    Eigen::Index j;
    double t;
  };
  std::vector<Split> splits{{-1, 0.0}};  // j = -1: everything goes left
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (double t : midpoints(X, j)) splits.push_back({j, t});
  auto goes_left = [&](const Split& s, Eigen::Index i) { return s.j < 0 || X(i, s.j) <= s.t; };
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& root : splits)
    for (const auto& ls : splits)
      for (const auto& rs : splits)
        for (int actions = 0; actions < 16; ++actions) {
          double total = 0.0;
          for (Eigen::Index i = 0; i < X.rows(); ++i) {
            int leaf = goes_left(root, i) ? (goes_left(ls, i) ? 0 : 1) : (goes_left(rs, i) ? 2 : 3);
            total += (actions >> leaf) & 1 ? g1(i) : g0(i);
          }
          best = std::max(best, total);
        }
  return best;
}

// Scores on a dyadic grid (multiples of 1/8 in [-4, 4]) so every partial sum is exact.
inline Eigen::VectorXd dyadic_scores(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) g(i) = std::floor(eegpolicy::uniform01(rng) * 65.0) / 8.0 - 4.0;
  return g;
}

// Covariates with ties: small integer grid.
inline Eigen::MatrixXd tied_covariates(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = std::floor(eegpolicy::uniform01(rng) * 7.0);
  return X;
}

// ---- synthetic EEG --------------------------------------------------------------

// Channels mix two shared rhythms (theta 6 Hz, alpha 10 Hz) with per-channel gains
// plus white noise. Eyes-closed recordings carry stronger alpha.
inline eegpolicy::Recording synthetic_recording(const std::vector<std::string>& names, double fs, double seconds,
                                                eegpolicy::Condition cond, int block, const std::string& subject,
                                                std::uint64_t seed, double alpha_gain = 1.0) {
  Rng rng = eegpolicy::make_rng(seed, static_cast<std::uint64_t>(block));
  const auto nc = static_cast<Eigen::Index>(names.size());
  const auto ns = static_cast<Eigen::Index>(std::llround(fs * seconds));
  eegpolicy::Recording rec;
  rec.sample_rate = fs;
  rec.condition = cond;
  rec.block_index = block;
  rec.subject_id = subject;
  for (const auto& n : names) rec.channels.push_back({n, std::nullopt});
  rec.data.resize(nc, ns);
  const double alpha = (cond == eegpolicy::Condition::eyes_closed ? 12.0 : 4.0) * alpha_gain;
  const double theta = 5.0;
  std::vector<double> ga(static_cast<std::size_t>(nc)), gt(ga.size());
  for (auto& g : ga) g = 0.6 + 0.8 * eegpolicy::uniform01(rng);
  for (auto& g : gt) g = 0.6 + 0.8 * eegpolicy::uniform01(rng);
  const double pa = 2.0 * std::numbers::pi * eegpolicy::uniform01(rng);
  const double pt = 2.0 * std::numbers::pi * eegpolicy::uniform01(rng);
  for (Eigen::Index s = 0; s < ns; ++s) {
    const double t = static_cast<double>(s) / fs;
    const double a = alpha * std::sin(2.0 * std::numbers::pi * 10.0 * t + pa);
    const double th = theta * std::sin(2.0 * std::numbers::pi * 6.0 * t + pt);
    for (Eigen::Index c = 0; c < nc; ++c)
      rec.data(c, s) = ga[static_cast<std::size_t>(c)] * a + gt[static_cast<std::size_t>(c)] * th +
                       2.0 * eegpolicy::standard_normal(rng);
  }
  return rec;
}

}  // namespace testsupport

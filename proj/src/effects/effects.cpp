#include "eegpolicy/effects.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "eegpolicy/csv.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/stats.hpp"

namespace eegpolicy {

DoublyRobustScores doubly_robust_scores(const Eigen::VectorXd& tau, const Eigen::VectorXd& e,
                                        const Eigen::VectorXd& m, const Eigen::VectorXd& W,
                                        const Eigen::VectorXd& Y) {
  const auto n = Y.size();
  if (tau.size() != n || e.size() != n || m.size() != n || W.size() != n)
    throw Error(Errc::length_mismatch, "scores", "input vectors differ in length");
  DoublyRobustScores s;
  s.tau_hat = tau;
  s.e_hat = e;
  s.m_hat = m;
  s.gamma.resize(n);
  s.gamma1.resize(n);
  s.gamma0.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(tau(i)) || !std::isfinite(e(i)) || !std::isfinite(m(i)) || !std::isfinite(Y(i)))
      throw Error(Errc::domain, "row " + std::to_string(i), "non-finite nuisance or outcome");
    if (!(e(i) > 0.0 && e(i) < 1.0)) throw Error(Errc::domain, "e_hat", "propensity must lie in (0, 1)");
    const double we = W(i) - e(i);
    s.gamma(i) = tau(i) + we / (e(i) * (1.0 - e(i))) * (Y(i) - m(i) - we * tau(i));
    const double u1 = m(i) + (1.0 - e(i)) * tau(i);
    const double u0 = m(i) - e(i) * tau(i);
    s.gamma1(i) = u1 + W(i) / e(i) * (Y(i) - u1);
    s.gamma0(i) = u0 + (1.0 - W(i)) / (1.0 - e(i)) * (Y(i) - u0);
  }
  return s;
}

AteResult ate(const Eigen::VectorXd& gamma) {
  const auto n = gamma.size();
  if (n < 2) throw Error(Errc::invalid_argument, "gamma", "need at least 2 scores");
  AteResult r;
  r.tau_hat = gamma.mean();
  r.score_variance = (gamma.array() - r.tau_hat).square().sum() / static_cast<double>(n);
  r.standard_error = std::sqrt(r.score_variance / static_cast<double>(n));
  r.ci_lo = r.tau_hat - 1.96 * r.standard_error;
  r.ci_hi = r.tau_hat + 1.96 * r.standard_error;
  if (r.standard_error > 0.0)
    r.p_value = 2.0 * stats::normal_upper_tail(std::abs(r.tau_hat) / r.standard_error);
  else
    r.p_value = r.tau_hat == 0.0 ? 1.0 : 0.0;
  return r;
}

BlpResult blp_test(const Eigen::VectorXd& Y, const Eigen::VectorXd& W, const Eigen::VectorXd& m,
                   const Eigen::VectorXd& e, const Eigen::VectorXd& tau) {
  const auto n = Y.size();
  if (W.size() != n || m.size() != n || e.size() != n || tau.size() != n)
    throw Error(Errc::length_mismatch, "blp", "input vectors differ in length");
  BlpResult res;
  res.n = static_cast<std::size_t>(n);
  res.mean_prediction = tau.mean();
  const Eigen::VectorXd wr = W - e;
  const Eigen::VectorXd yr = Y - m;
  const bool have_alpha = res.mean_prediction != 0.0;
  const bool have_beta = tau.maxCoeff() > tau.minCoeff();
  std::vector<std::string> notes;
  if (!have_alpha) notes.push_back("mean prediction is zero; alpha term dropped");
  if (!have_beta) notes.push_back("predictions have no variance; beta term dropped");
  const int k = static_cast<int>(have_alpha) + static_cast<int>(have_beta);
  if (k == 0) {
    res.note = "no estimable terms";
    return res;
  }
  if (n <= k) throw Error(Errc::invalid_argument, "n", "too few rows for the regression");
  Eigen::MatrixXd X(n, k);
  int col = 0;
  if (have_alpha) X.col(col++) = res.mean_prediction * wr;
  if (have_beta) X.col(col++) = (tau.array() - res.mean_prediction).matrix().cwiseProduct(wr);

  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  if (!lu.isInvertible()) throw Error(Errc::degenerate, "blp", "design matrix is singular");
  const Eigen::MatrixXd bread = lu.inverse();
  const Eigen::VectorXd coef = bread * X.transpose() * yr;
  const Eigen::VectorXd resid = yr - X * coef;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd xi = X.row(i);
    const double h = (xi * bread * xi.transpose())(0, 0);
    const double u = resid(i) / (1.0 - h);
    meat += xi.transpose() * xi * (u * u);
  }
  const Eigen::MatrixXd V = bread * meat * bread;
  const double dof = static_cast<double>(n - k);
  auto make = [&](int c) {
    BlpCoefficient b;
    b.estimate = coef(c);
    b.standard_error = std::sqrt(V(c, c));
    b.t_value = b.standard_error > 0.0 ? b.estimate / b.standard_error : 0.0;
    b.p_value = b.standard_error > 0.0 ? stats::student_t_upper_tail(b.t_value, dof) : (b.estimate > 0 ? 0.0 : 1.0);
    return b;
  };
  col = 0;
  if (have_alpha) res.alpha = make(col++);
  if (have_beta) res.beta = make(col++);
  for (std::size_t i = 0; i < notes.size(); ++i) res.note += (i ? "; " : "") + notes[i];
  return res;
}

std::string blp_table_csv(const BlpResult& r) {
  std::ostringstream out;
  out << "term,estimate,std_error,t_value,p_value_gt\n";
  auto row = [&](const char* name, const std::optional<BlpCoefficient>& c) {
    if (!c) {
      out << name << ",NA,NA,NA,NA\n";
      return;
    }
    out << name << ',' << csv::format_double(c->estimate) << ',' << csv::format_double(c->standard_error) << ','
        << csv::format_double(c->t_value) << ',' << csv::format_double(c->p_value) << '\n';
  };
  row("mean.forest.prediction", r.alpha);
  row("differential.forest.prediction", r.beta);
  return out.str();
}

Eigen::VectorXd transformed_outcome(const Eigen::VectorXd& Y, const Eigen::VectorXd& W, double p,
                                    TransformedOutcome form) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::domain, "p", "assignment probability must lie in (0, 1)");
  if (W.size() != Y.size()) throw Error(Errc::length_mismatch, "W", "length differs from Y");
  const double d = p * (1.0 - p);
  if (form == TransformedOutcome::literal) return (Y - W) / d;
  return Y.cwiseProduct((W.array() - p).matrix()) / d;
}

double transformed_outcome_mse(const Eigen::VectorXd& Y, const Eigen::VectorXd& W, double p,
                               const Eigen::VectorXd& tau, TransformedOutcome form) {
  const Eigen::VectorXd ystar = transformed_outcome(Y, W, p, form);
  if (tau.size() != ystar.size()) throw Error(Errc::length_mismatch, "tau_hat", "length differs from Y");
  return (ystar - tau).squaredNorm() / static_cast<double>(ystar.size());
}

}  // namespace eegpolicy

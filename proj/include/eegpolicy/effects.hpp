#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

namespace eegpolicy {

struct DoublyRobustScores {
  Eigen::VectorXd gamma;
  Eigen::VectorXd gamma1;
  Eigen::VectorXd gamma0;
  Eigen::VectorXd tau_hat;
  Eigen::VectorXd e_hat;
  Eigen::VectorXd m_hat;

  std::size_t size() const { return static_cast<std::size_t>(gamma.size()); }
};

DoublyRobustScores doubly_robust_scores(const Eigen::VectorXd& tau_hat, const Eigen::VectorXd& e_hat,
                                        const Eigen::VectorXd& m_hat, const Eigen::VectorXd& W,
                                        const Eigen::VectorXd& Y);

struct AteResult {
  double tau_hat = 0.0;
  double score_variance = 0.0;
  double standard_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
};

AteResult ate(const Eigen::VectorXd& gamma);
inline AteResult ate(const DoublyRobustScores& scores) { return ate(scores.gamma); }

struct BlpCoefficient {
  double estimate = 0.0;
  double standard_error = 0.0;
  double t_value = 0.0;
  double p_value = 1.0;  // one-sided, H1: coefficient > 0
};

struct BlpResult {
  std::optional<BlpCoefficient> alpha;  // absent when mean prediction is 0
  std::optional<BlpCoefficient> beta;   // absent when predictions have no variance
  double mean_prediction = 0.0;
  std::size_t n = 0;
  std::string note;
};

// Regresses Y - m on mean_pred*(W - e) and (tau - mean_pred)*(W - e), no intercept,
// with HC3 standard errors and Student-t one-sided p-values.
BlpResult blp_test(const Eigen::VectorXd& Y, const Eigen::VectorXd& W, const Eigen::VectorXd& m_hat,
                   const Eigen::VectorXd& e_hat, const Eigen::VectorXd& tau_hat);

std::string blp_table_csv(const BlpResult& r);

enum class TransformedOutcome {
  // Y (W - p) / (p (1 - p))
  ipw,
  // (Y - W) / (p (1 - p)), the alternative form
  literal,
};

Eigen::VectorXd transformed_outcome(const Eigen::VectorXd& Y, const Eigen::VectorXd& W, double p,
                                    TransformedOutcome form = TransformedOutcome::ipw);
double transformed_outcome_mse(const Eigen::VectorXd& Y, const Eigen::VectorXd& W, double p,
                               const Eigen::VectorXd& tau_hat,
                               TransformedOutcome form = TransformedOutcome::ipw);

}  // namespace eegpolicy

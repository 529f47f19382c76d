#pragma once

#include <Eigen/Dense>

#include <span>
#include <string_view>

#include "usc/diffnet.hpp"
#include "usc/replay.hpp"
#include "usc/rng.hpp"

namespace usc {

/// Safety-critic training objective. SC: Bellman regression only. CSC: adds
/// the log-sum-exp conservative term with unit weights. USC: weights the term
/// per sample by the uncertainty adjustment. USC_NR: USC without refinement.
enum class CriticKind { sc, csc, usc, usc_nr };

std::string_view to_string(CriticKind k);
CriticKind critic_kind_from_string(std::string_view name);

inline bool uses_uncertainty(CriticKind k) {
  return k == CriticKind::usc || k == CriticKind::usc_nr;
}

struct BatchStats {
  double mean = 0.0;
  double stddev = 0.0;  // population normalisation
  double eps = 1e-8;

  static BatchStats of(const Eigen::VectorXd& q, double eps = 1e-8);
  /// sigma + eps, floored at 1e-8.
  double scale() const;
  double normalize(double q) const { return (q - mean) / scale(); }
};

struct ConservativeConfig {
  int alternatives = 10;  // uniform alternative actions per sample
  double gamma = 0.95;
  double eps = 1e-8;

  void validate() const;
};

/// c + gamma * q_next, without bootstrapping past a terminal transition.
double bellman_cost_target(double cost, double gamma, double q_next, bool terminal = false);

/// log sum_i exp(z(q_alt_i)) - z(q_anchor) with z(q) = (q - mean) / scale,
/// evaluated with a max shift. Throws NumericError on non-finite input.
double lse_penalty(std::span<const double> q_alts, double q_anchor, const BatchStats& stats);

/// max_i z_i - z_anchor <= penalty <= same + log m.
bool lse_sandwich_holds(std::span<const double> q_alts, double q_anchor,
                        const BatchStats& stats, double penalty, double tol = 1e-12);

/// `count` actions uniform on [-1, 1]^action_dim, one per column.
Eigen::MatrixXd draw_uniform_actions(Rng& rng, int action_dim, int count);

/// Stack states over actions into critic inputs.
Eigen::MatrixXd concat_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom);

/// Bootstrapped targets r_or_c + gamma * (1 - terminal) * Q_target(s', pi_target(s')).
Eigen::VectorXd td_targets(const Eigen::VectorXd& signal, const Minibatch& batch,
                           const NetworkParameters& target_critic,
                           const NetworkParameters& target_actor, double gamma);

struct SafetyCriticNets {
  const NetworkParameters& critic;
  const NetworkParameters& target_critic;
  const NetworkParameters& target_actor;
};

struct SafetyLoss {
  double loss = 0.0;
  double bellman = 0.0;       // mean of 1/2 squared Bellman residuals
  double conservative = 0.0;  // mean of 1/2 * weight * penalty
  Eigen::VectorXd grad;
  Eigen::VectorXd q;          // Q_C at the batch anchors
  BatchStats stats;
};

/// Batch mean of [1/2 (Q_C - target)^2 + 1/2 w * lse_penalty]. The batch
/// statistics are held constant under differentiation. CSC overrides the
/// weights with ones; SC omits the conservative term. Alternatives are drawn
/// from `alt_rng` sample by sample, `alternatives` columns each.
SafetyLoss safety_loss(const Minibatch& batch, std::span<const double> weights, CriticKind kind,
                       const ConservativeConfig& cfg, const SafetyCriticNets& nets,
                       Rng& alt_rng);

struct RewardLoss {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Mean squared TD error of the reward critic against target networks.
RewardLoss reward_loss(const Minibatch& batch, const NetworkParameters& critic,
                       const NetworkParameters& target_critic,
                       const NetworkParameters& target_actor, double gamma);

}  // namespace usc

#include "usc/critics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "usc/errors.hpp"

namespace usc {

std::string_view to_string(CriticKind k) {
  switch (k) {
    case CriticKind::sc: return "sc";
    case CriticKind::csc: return "csc";
    case CriticKind::usc: return "usc";
    case CriticKind::usc_nr: return "usc_nr";
  }
  return "sc";
}

CriticKind critic_kind_from_string(std::string_view name) {
  if (name == "sc") return CriticKind::sc;
  if (name == "csc") return CriticKind::csc;
  if (name == "usc") return CriticKind::usc;
  if (name == "usc_nr") return CriticKind::usc_nr;
  throw InvalidInputError("unknown critic kind '" + std::string(name) + "'");
}

BatchStats BatchStats::of(const Eigen::VectorXd& q, double eps) {
  BatchStats s;
  s.eps = eps;
  if (q.size() == 0) return s;
  s.mean = q.mean();
  s.stddev = std::sqrt((q.array() - s.mean).square().mean());
  return s;
}

double BatchStats::scale() const { return std::max(stddev + eps, 1e-8); }

void ConservativeConfig::validate() const {
  if (alternatives < 1) throw InvalidInputError("alternative action count must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidInputError("gamma must lie in [0, 1)");
  if (!(eps > 0.0)) throw InvalidInputError("numeric-stability constant must be > 0");
}

double bellman_cost_target(double cost, double gamma, double q_next, bool terminal) {
  if (!std::isfinite(cost) || !std::isfinite(q_next)) {
    throw NumericError("non-finite Bellman target input");
  }
  return terminal ? cost : cost + gamma * q_next;
}

namespace {

// log-sum-exp of a sequence after max shift; also leaves softmax weights.
double log_sum_exp(std::span<const double> z, std::vector<double>* softmax = nullptr) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  if (softmax) {
    softmax->resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) (*softmax)[i] = std::exp(z[i] - zmax) / sum;
  }
  return zmax + std::log(sum);
}

}  // namespace

double lse_penalty(std::span<const double> q_alts, double q_anchor, const BatchStats& stats) {
  if (q_alts.empty()) throw InvalidInputError("lse_penalty needs at least one alternative");
  if (!std::isfinite(q_anchor)) throw NumericError("non-finite anchor value");
  std::vector<double> z(q_alts.size());
  for (std::size_t i = 0; i < q_alts.size(); ++i) {
    if (!std::isfinite(q_alts[i])) {
      throw NumericError("non-finite alternative value", static_cast<std::ptrdiff_t>(i));
    }
    z[i] = stats.normalize(q_alts[i]);
  }
  return log_sum_exp(z) - stats.normalize(q_anchor);
}

bool lse_sandwich_holds(std::span<const double> q_alts, double q_anchor,
                        const BatchStats& stats, double penalty, double tol) {
  double zmax = -std::numeric_limits<double>::infinity();
  for (double q : q_alts) zmax = std::max(zmax, stats.normalize(q));
  const double lower = zmax - stats.normalize(q_anchor);
  const double upper = lower + std::log(static_cast<double>(q_alts.size()));
  const double slack = tol * std::max(1.0, std::abs(lower));
  return penalty >= lower - slack && penalty <= upper + slack;
}

Eigen::MatrixXd draw_uniform_actions(Rng& rng, int action_dim, int count) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd a(action_dim, count);
  for (int j = 0; j < count; ++j) {
    for (int i = 0; i < action_dim; ++i) a(i, j) = u(rng);
  }
  return a;
}

Eigen::MatrixXd concat_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd x(top.rows() + bottom.rows(), top.cols());
  x.topRows(top.rows()) = top;
  x.bottomRows(bottom.rows()) = bottom;
  return x;
}

Eigen::VectorXd td_targets(const Eigen::VectorXd& signal, const Minibatch& batch,
                           const NetworkParameters& target_critic,
                           const NetworkParameters& target_actor, double gamma) {
  const Eigen::MatrixXd next_actions = forward_batch(target_actor, batch.s_next);
  const Eigen::VectorXd q_next =
      forward_batch(target_critic, concat_rows(batch.s_next, next_actions)).row(0).transpose();
  return signal.array() + gamma * (1.0 - batch.terminal.array()) * q_next.array();
}

SafetyLoss safety_loss(const Minibatch& batch, std::span<const double> weights, CriticKind kind,
                       const ConservativeConfig& cfg, const SafetyCriticNets& nets,
                       Rng& alt_rng) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw InvalidInputError("safety_loss needs a nonempty batch");
  if (kind != CriticKind::sc && kind != CriticKind::csc &&
      weights.size() != static_cast<std::size_t>(n)) {
    throw InvalidInputError("weight vector has length " + std::to_string(weights.size()) +
                            ", batch has " + std::to_string(n));
  }
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidInputError("uncertainty weights must be >= 0");
  }

  SafetyLoss out;
  ForwardTape anchor_tape;
  out.q = forward_tape(nets.critic, batch.state_actions(), anchor_tape).row(0).transpose();
  out.stats = BatchStats::of(out.q, cfg.eps);
  const Eigen::VectorXd y =
      td_targets(batch.c, batch, nets.target_critic, nets.target_actor, cfg.gamma);
  const Eigen::VectorXd residual = out.q - y;
  const double inv_n = 1.0 / static_cast<double>(n);

  out.bellman = 0.5 * residual.squaredNorm() * inv_n;
  Eigen::MatrixXd d_anchor = (residual * inv_n).transpose();

  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  if (kind == CriticKind::csc) {
    std::fill(w.begin(), w.end(), 1.0);
  } else if (kind != CriticKind::sc) {
    std::copy(weights.begin(), weights.end(), w.begin());
  }
  const bool conservative = std::any_of(w.begin(), w.end(), [](double v) { return v > 0.0; });

  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nets.critic.size()));
  if (conservative) {
    const int m = cfg.alternatives;
    const int adim = static_cast<int>(batch.a.rows());
    Eigen::MatrixXd alt_inputs(batch.s.rows() + adim, n * m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::MatrixXd alts = draw_uniform_actions(alt_rng, adim, m);
      for (int j = 0; j < m; ++j) {
        alt_inputs.col(i * m + j) << batch.s.col(i), alts.col(j);
      }
    }
    ForwardTape alt_tape;
    const Eigen::RowVectorXd q_alt = forward_tape(nets.critic, alt_inputs, alt_tape).row(0);
    const double scale = out.stats.scale();
    Eigen::MatrixXd d_alt = Eigen::MatrixXd::Zero(1, n * m);
    std::vector<double> z(static_cast<std::size_t>(m));
    std::vector<double> soft;
    double cons_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) z[static_cast<std::size_t>(j)] = out.stats.normalize(q_alt[i * m + j]);
      const double lse = log_sum_exp(z, &soft);
      const double penalty = lse - out.stats.normalize(out.q[i]);
      if (!std::isfinite(penalty)) throw NumericError("non-finite conservative penalty", i);
      const double wi = w[static_cast<std::size_t>(i)];
      cons_sum += 0.5 * wi * penalty;
      d_anchor(0, i) -= 0.5 * wi * inv_n / scale;
      for (int j = 0; j < m; ++j) {
        d_alt(0, i * m + j) = 0.5 * wi * inv_n * soft[static_cast<std::size_t>(j)] / scale;
      }
    }
    out.conservative = cons_sum * inv_n;
    out.grad += backward(nets.critic, alt_tape, d_alt).param_grad;
  }
  out.grad += backward(nets.critic, anchor_tape, d_anchor).param_grad;
  out.loss = out.bellman + out.conservative;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite safety-critic loss");
  return out;
}

RewardLoss reward_loss(const Minibatch& batch, const NetworkParameters& critic,
                       const NetworkParameters& target_critic,
                       const NetworkParameters& target_actor, double gamma) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw InvalidInputError("reward_loss needs a nonempty batch");
  ForwardTape tape;
  const Eigen::VectorXd q =
      forward_tape(critic, batch.state_actions(), tape).row(0).transpose();
  const Eigen::VectorXd y = td_targets(batch.r, batch, target_critic, target_actor, gamma);
  const Eigen::VectorXd residual = q - y;
  RewardLoss out;
  out.loss = residual.squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite reward-critic loss");
  const Eigen::MatrixXd d = (2.0 / static_cast<double>(n)) * residual.transpose();
  out.grad = backward(critic, tape, d).param_grad;
  return out;
}

}  // namespace usc

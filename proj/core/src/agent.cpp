#include "usc/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <unordered_set>

#include "usc/errors.hpp"

namespace usc {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::ddpg: return "ddpg";
    case Method::sc: return "sc";
    case Method::csc: return "csc";
    case Method::usc: return "usc";
    case Method::usc_nr: return "usc_nr";
  }
  return "ddpg";
}

Method method_from_string(std::string_view name) {
  if (name == "ddpg") return Method::ddpg;
  if (name == "sc") return Method::sc;
  if (name == "csc") return Method::csc;
  if (name == "usc") return Method::usc;
  if (name == "usc_nr") return Method::usc_nr;
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected ddpg, sc, csc, usc or usc_nr)");
}

std::optional<CriticKind> critic_kind(Method m) {
  switch (m) {
    case Method::ddpg: return std::nullopt;
    case Method::sc: return CriticKind::sc;
    case Method::csc: return CriticKind::csc;
    case Method::usc: return CriticKind::usc;
    case Method::usc_nr: return CriticKind::usc_nr;
  }
  return std::nullopt;
}

OUProcess::OUProcess(int dim, double theta_, double sigma_)
    : state(Eigen::VectorXd::Zero(dim)), theta(theta_), sigma(sigma_) {}

Eigen::VectorXd ou_step(OUProcess& proc, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Eigen::Index i = 0; i < proc.state.size(); ++i) {
    proc.state[i] += proc.theta * (0.0 - proc.state[i]) + proc.sigma * n01(rng);
  }
  return proc.state;
}

Eigen::VectorXd clip_action(const Eigen::VectorXd& a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

void ScreenConfig::validate() const {
  if (samples < 1) throw InvalidInputError("screening needs at least one candidate");
  if (!(safe_tolerance >= 0.0)) throw InvalidInputError("safety tolerance must be >= 0");
  if (!(sigma >= 0.0)) throw InvalidInputError("screening noise scale must be >= 0");
}

ScreenResult screen_action(const Eigen::VectorXd& state, const Eigen::VectorXd& proposal,
                           const NetworkParameters& safety_critic, const ScreenConfig& cfg,
                           Rng& rng) {
  cfg.validate();
  ScreenResult out;
  Eigen::VectorXd x(state.size() + proposal.size());
  x << state, proposal;
  const double q0 = forward(safety_critic, x)[0];
  if (q0 <= cfg.safe_tolerance) {
    out.action = proposal;
    out.evaluated = proposal;
    out.q = Eigen::VectorXd::Constant(1, q0);
    return out;
  }
  out.triggered = true;
  const auto m = proposal.size();
  out.evaluated.resize(m, cfg.samples + 1);
  out.evaluated.col(0) = proposal;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int k = 1; k <= cfg.samples; ++k) {
    Eigen::VectorXd cand(m);
    for (Eigen::Index i = 0; i < m; ++i) cand[i] = proposal[i] + cfg.sigma * n01(rng);
    out.evaluated.col(k) = clip_action(cand);
  }
  Eigen::MatrixXd inputs(state.size() + m, out.evaluated.cols());
  inputs.topRows(state.size()) = state.replicate(1, out.evaluated.cols());
  inputs.bottomRows(m) = out.evaluated;
  out.q = forward_batch(safety_critic, inputs).row(0).transpose();
  out.q[0] = q0;
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < out.q.size(); ++k) {
    if (out.q[k] < out.q[best]) best = k;
  }
  out.chosen = best;
  out.action = out.evaluated.col(best);
  return out;
}

ActorLoss actor_loss(const Eigen::MatrixXd& states, const NetworkParameters& actor,
                     const NetworkParameters& actor_old, const NetworkParameters& reward_critic,
                     const NetworkParameters* safety_critic, double lambda, double kl_coef,
                     double policy_sigma) {
  const auto n = states.cols();
  if (n == 0) throw InvalidInputError("actor_loss needs a nonempty batch");
  if (!(policy_sigma > 0.0)) throw InvalidInputError("policy spread must be > 0");
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto s_dim = states.rows();

  ForwardTape actor_tape;
  const Eigen::MatrixXd actions = forward_tape(actor, states, actor_tape);
  const auto a_dim = actions.rows();
  const Eigen::MatrixXd inputs = concat_rows(states, actions);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, n);

  ActorLoss out;
  ForwardTape r_tape;
  const Eigen::RowVectorXd q_r = forward_tape(reward_critic, inputs, r_tape).row(0);
  const Eigen::MatrixXd dq_r = backward(reward_critic, r_tape, ones, true).input_grad;
  out.reward_term = -q_r.mean();
  Eigen::MatrixXd d_actions = -inv_n * dq_r.bottomRows(a_dim);

  if (safety_critic != nullptr && lambda != 0.0) {
    ForwardTape c_tape;
    const Eigen::RowVectorXd q_c = forward_tape(*safety_critic, inputs, c_tape).row(0);
    const Eigen::MatrixXd dq_c = backward(*safety_critic, c_tape, ones, true).input_grad;
    out.cost_term = lambda * q_c.mean();
    d_actions += lambda * inv_n * dq_c.bottomRows(a_dim);
  }

  if (kl_coef != 0.0) {
    const Eigen::MatrixXd diff = actions - forward_batch(actor_old, states);
    const double inv_var = 1.0 / (policy_sigma * policy_sigma);
    out.kl_term = kl_coef * 0.5 * inv_var * diff.colwise().squaredNorm().mean();
    d_actions += kl_coef * inv_var * inv_n * diff;
  }
  (void)s_dim;
  out.loss = out.reward_term + out.cost_term + out.kl_term;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite actor loss");
  out.grad = backward(actor, actor_tape, d_actions).param_grad;
  return out;
}

DualState dual_update(DualState dual) {
  dual.lambda = std::max(0.0, dual.lambda - dual.lr * (dual.budget - dual.episode_cost));
  dual.episode_cost = 0.0;
  return dual;
}

void AgentConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("agent.") + name + " must be > 0");
  };
  positive(actor_lr, "actor_lr");
  positive(critic_lr, "critic_lr");
  positive(safety_lr, "safety_lr");
  positive(dual_lr, "dual_lr");
  positive(gn_damping, "gn_damping");
  positive(policy_sigma, "policy_sigma");
  positive(lse_eps, "lse_eps");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("agent.tau must lie in (0, 1]");
  if (!(lambda_init >= 0.0)) throw ConfigError("agent.lambda_init must be >= 0");
  if (batch_size < 1) throw ConfigError("agent.batch_size must be >= 1");
  if (buffer_capacity < 1) throw ConfigError("agent.buffer_capacity must be >= 1");
  if (!(ou_sigma >= 0.0)) throw ConfigError("agent.ou_sigma must be >= 0");
  if (!(ou_theta > 0.0 && ou_theta <= 1.0)) throw ConfigError("agent.ou_theta must lie in (0, 1]");
  if (!(safe_tolerance >= 0.0)) throw ConfigError("agent.safe_tolerance must be >= 0");
  if (screen_samples < 1) throw ConfigError("agent.screen_samples must be >= 1");
  if (!(kl_coef >= 0.0)) throw ConfigError("agent.kl_coef must be >= 0");
  if (alt_actions < 1) throw ConfigError("agent.alt_actions must be >= 1");
  if (top_n < 1) throw ConfigError("agent.top_n must be >= 1");
  if (neighbours < 1) throw ConfigError("agent.neighbours must be >= 1");
  if (!(trust_beta >= 0.0)) throw ConfigError("agent.trust_beta must be >= 0");
  if (!(trust_eps >= 0.0)) throw ConfigError("agent.trust_eps must be >= 0");
  if (warmup_batches < 1) throw ConfigError("agent.warmup_batches must be >= 1");
  if (top_n > batch_size) throw ConfigError("agent.top_n must not exceed agent.batch_size");
  if (method == Method::usc && warmup_batches * batch_size < top_n + neighbours) {
    throw ConfigError("agent.warmup_batches * agent.batch_size must be at least "
                      "agent.top_n + agent.neighbours");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("agent.hidden sizes must be >= 1");
  }
}

AgentNets AgentNets::create(const CmdpSpec& cmdp, const std::vector<int>& hidden, Rng& rng,
                            Activation safety_output) {
  const auto actor_spec =
      NetworkSpec::mlp(cmdp.state_dim, hidden, cmdp.action_dim, Activation::relu, Activation::tanh);
  const auto critic_spec = NetworkSpec::mlp(cmdp.state_dim + cmdp.action_dim, hidden, 1,
                                            Activation::relu, Activation::identity);
  const auto safety_spec = NetworkSpec::mlp(cmdp.state_dim + cmdp.action_dim, hidden, 1,
                                            Activation::relu, safety_output);
  AgentNets n{NetworkParameters::initialized(actor_spec, rng),
              {},
              NetworkParameters::initialized(critic_spec, rng),
              {},
              NetworkParameters::initialized(safety_spec, rng),
              {},
              AdamState(actor_spec.parameter_count()),
              AdamState(critic_spec.parameter_count()),
              AdamState(critic_spec.parameter_count())};
  n.actor_target = n.actor;
  n.reward_target = n.reward_critic;
  n.safety_target = n.safety_critic;
  return n;
}

namespace {

AgentNets make_nets(const CmdpSpec& cmdp, const AgentConfig& cfg, const SeedTree& seeds) {
  Rng rng = seeds.stream("init");
  return AgentNets::create(cmdp, cfg.hidden, rng, cfg.safety_output);
}

}  // namespace

Trainer::Trainer(EnvConfig env, AgentConfig agent, std::uint64_t seed)
    : env_cfg_(std::move(env)),
      cfg_(std::move(agent)),
      cmdp_((env_cfg_.validate(), cfg_.validate(), env_cfg_.cmdp())),
      seeds_(seed),
      explore_rng_(seeds_.stream("exploration")),
      sample_rng_(seeds_.stream("sampling")),
      alt_rng_(seeds_.stream("alternatives")),
      screen_rng_(seeds_.stream("screening")),
      env_(make_environment(env_cfg_)),
      buffer_(cfg_.buffer_capacity, cmdp_.state_dim, cmdp_.action_dim),
      nets_(make_nets(cmdp_, cfg_, seeds_)),
      ou_(cmdp_.action_dim, cfg_.ou_theta, cfg_.ou_sigma) {
  dual_.lambda = cfg_.lambda_init;
  dual_.lr = cfg_.dual_lr;
  dual_.budget = env_cfg_.budget;
}

InfluenceScope Trainer::influence_scope() const {
  return cfg_.influence_scope.value_or(default_influence_scope(nets_.safety_critic.spec()));
}

std::uint64_t Trainer::layout_seed(int episode) const {
  return splitmix64(seeds_.seed_for("env") + static_cast<std::uint64_t>(episode));
}

Eigen::VectorXd Trainer::act(const Eigen::VectorXd& state, bool explore) {
  Eigen::VectorXd a = forward(nets_.actor, state);
  if (explore) a = clip_action(a + ou_step(ou_, explore_rng_));
  if (uses_safety_critic(cfg_.method)) {
    const ScreenConfig sc{cfg_.safe_tolerance, cfg_.screen_samples, cfg_.ou_sigma};
    a = screen_action(state, a, nets_.safety_critic, sc, screen_rng_).action;
  }
  return clip_action(a);
}

EpisodeRecord Trainer::run_episode() {
  const auto t0 = std::chrono::steady_clock::now();
  EpisodeRecord rec;
  rec.episode = episode_;
  rec.layout_seed = layout_seed(episode_);
  Eigen::VectorXd s = env_->reset(rec.layout_seed);
  ou_.reset();
  dual_.episode_cost = 0.0;
  const bool safety = uses_safety_critic(cfg_.method);
  const ScreenConfig screen{cfg_.safe_tolerance, cfg_.screen_samples, cfg_.ou_sigma};
  const std::size_t warmup =
      static_cast<std::size_t>(cfg_.warmup_batches) * static_cast<std::size_t>(cfg_.batch_size);

  bool done = false;
  while (!done) {
    Eigen::VectorXd a = clip_action(forward(nets_.actor, s) + ou_step(ou_, explore_rng_));
    if (safety) {
      const auto sr = screen_action(s, a, nets_.safety_critic, screen, screen_rng_);
      if (sr.triggered) ++rec.screen_triggers;
      a = clip_action(sr.action);
    }
    const StepResult step = env_->step(a);
    dual_.accumulate(step.cost);
    rec.reward += step.reward;
    rec.cost += step.cost;
    rec.success = rec.success || step.success;
    // Only true terminals stop bootstrapping; time-limit truncation does not.
    buffer_.push({s, a, step.reward, step.cost, step.observation, step.success});
    ++rec.steps;
    s = step.observation;
    done = step.terminal;
    if (buffer_.size() >= warmup) update(rec, rec.steps);
  }

  if (safety) {
    dual_ = dual_update(dual_);
    emit("dual");
  }
  rec.lambda = dual_.lambda;
  if (rec.updates > 0) {
    const double k = 1.0 / rec.updates;
    rec.loss_safety *= k;
    rec.loss_bellman *= k;
    rec.loss_conservative *= k;
    rec.loss_reward *= k;
    rec.loss_actor *= k;
    rec.mean_u *= k;
    rec.mean_weight *= k;
    rec.refine_loss *= k;
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++episode_;
  return rec;
}

std::vector<EpisodeRecord> Trainer::train(int episodes) {
  std::vector<EpisodeRecord> out;
  out.reserve(static_cast<std::size_t>(std::max(episodes, 0)));
  for (int e = 0; e < episodes; ++e) out.push_back(run_episode());
  return out;
}

void Trainer::update(EpisodeRecord& rec, int step) {
  const Minibatch batch = buffer_.sample_uniform(static_cast<std::size_t>(cfg_.batch_size),
                                                 sample_rng_);
  const auto kind = critic_kind(cfg_.method);
  const NetworkParameters frozen = refresh_frozen(nets_.safety_critic);
  const NetworkParameters actor_old = nets_.actor;
  UpdateRecord ur;
  ur.episode = episode_;
  ur.step = step;

  // Safety critic.
  Eigen::VectorXd u;
  if (kind) {
    const Eigen::MatrixXd inputs = batch.state_actions();
    std::vector<double> weights(batch.size(), 0.0);
    if (uses_uncertainty(*kind)) {
      const GramInfluence infl(frozen, inputs, {cfg_.gn_damping, influence_scope()});
      u = infl.reference_scores();
      const Eigen::VectorXd q = forward_batch(frozen, inputs).row(0).transpose();
      const double mean = q.mean();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        weights[i] = cfg_.zero_uncertainty_weights ? 0.0 : adjust_weight(u[ii], q[ii], mean);
      }
      ur.mean_u = u.mean();
      ur.max_u = u.maxCoeff();
      double wsum = 0.0;
      for (double w : weights) wsum += w;
      ur.mean_weight = wsum / static_cast<double>(weights.size());
    }
    const ConservativeConfig cc{cfg_.alt_actions, cmdp_.gamma, cfg_.lse_eps};
    const SafetyLoss sl =
        safety_loss(batch, weights, *kind, cc,
                    {nets_.safety_critic, nets_.safety_target, nets_.actor_target}, alt_rng_);
    adam_step(nets_.safety_critic, sl.grad, nets_.safety_opt, cfg_.safety_lr);
    ur.loss_safety = sl.loss;
    ur.loss_bellman = sl.bellman;
    ur.loss_conservative = sl.conservative;
    emit("safety_critic");
  }

  // Reward critic.
  const RewardLoss rl = reward_loss(batch, nets_.reward_critic, nets_.reward_target,
                                    nets_.actor_target, cmdp_.gamma);
  adam_step(nets_.reward_critic, rl.grad, nets_.reward_opt, cfg_.critic_lr);
  ur.loss_reward = rl.loss;
  emit("reward_critic");

  // Actor.
  const ActorLoss al =
      actor_loss(batch.s, nets_.actor, actor_old, nets_.reward_critic,
                 kind ? &nets_.safety_critic : nullptr, kind ? dual_.lambda : 0.0, cfg_.kl_coef,
                 cfg_.policy_sigma);
  adam_step(nets_.actor, al.grad, nets_.actor_opt, cfg_.actor_lr);
  ur.loss_actor = al.loss;
  emit("actor");

  // Refinement of the most uncertain samples.
  if (kind == CriticKind::usc) {
    std::vector<std::pair<std::size_t, double>> scores;
    std::unordered_set<std::size_t> seen;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (seen.insert(batch.indices[j]).second) {
        scores.emplace_back(batch.indices[j], u[static_cast<Eigen::Index>(j)]);
      }
    }
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg_.top_n), scores.size());
    const auto top = select_top_uncertain(scores, n);
    const Scaler scaler = buffer_.fit_scaler();
    const Minibatch anchors = buffer_.gather(top);
    const auto neighbours = buffer_.knn_batch(anchors.state_actions(),
                                              static_cast<std::size_t>(cfg_.neighbours), scaler, top);
    std::vector<std::size_t> flat;
    for (const auto& list : neighbours) {
      for (const auto& nb : list) flat.push_back(nb.index);
    }
    const Minibatch nb = buffer_.gather(flat);
    const Eigen::VectorXd costs = cfg_.refine_target == RefineTarget::bellman
                                      ? td_targets(nb.c, nb, nets_.safety_target,
                                                   nets_.actor_target, cmdp_.gamma)
                                      : nb.c;
    std::vector<double> targets;
    targets.reserve(top.size());
    const std::size_t k = static_cast<std::size_t>(cfg_.neighbours);
    for (std::size_t j = 0; j < top.size(); ++j) {
      std::vector<double> dist;
      for (const auto& n : neighbours[j]) dist.push_back(n.distance);
      targets.push_back(
          interpolate_cost(dist, std::span<const double>(costs.data() + j * k, k)).target);
    }
    const RefineLoss rf = refine_loss(nets_.safety_critic, frozen, anchors.state_actions(),
                                      targets, cfg_.trust_beta, cfg_.trust_eps);
    adam_step(nets_.safety_critic, rf.grad, nets_.safety_opt, cfg_.safety_lr);
    ur.refine_loss = rf.loss;
    ur.trust_hits = rf.trust_hits;
    emit("refine");
  }

  nets_.actor_target = soft_update(nets_.actor_target, nets_.actor, cfg_.tau);
  nets_.reward_target = soft_update(nets_.reward_target, nets_.reward_critic, cfg_.tau);
  if (kind) nets_.safety_target = soft_update(nets_.safety_target, nets_.safety_critic, cfg_.tau);
  emit("targets");

  ++rec.updates;
  rec.loss_safety += ur.loss_safety;
  rec.loss_bellman += ur.loss_bellman;
  rec.loss_conservative += ur.loss_conservative;
  rec.loss_reward += ur.loss_reward;
  rec.loss_actor += ur.loss_actor;
  rec.mean_u += ur.mean_u;
  rec.mean_weight += ur.mean_weight;
  rec.refine_loss += ur.refine_loss;
  rec.trust_hits += ur.trust_hits;
  if (update_log_) update_log_(ur);
}

std::vector<double> discounted_cost_to_go(std::span<const double> costs, double gamma) {
  std::vector<double> g(costs.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = costs.size(); i-- > 0;) {
    acc = costs[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

}  // namespace usc

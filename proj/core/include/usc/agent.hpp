#pragma once

// The constrained DDPG training loop with optional safety critic, action
// screening, Lagrangian actor objective and per-episode dual ascent.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "usc/critics.hpp"
#include "usc/diffnet.hpp"
#include "usc/envs.hpp"
#include "usc/replay.hpp"
#include "usc/rng.hpp"
#include "usc/uncertainty.hpp"

namespace usc {

/// Training method. `ddpg` is the unconstrained baseline without a safety
/// critic; the others pair DDPG with the matching safety-critic objective.
enum class Method { ddpg, sc, csc, usc, usc_nr };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);
std::optional<CriticKind> critic_kind(Method m);
inline bool uses_safety_critic(Method m) { return m != Method::ddpg; }

// ---------------------------------------------------------------------------
// Exploration

struct OUProcess {
  Eigen::VectorXd state;
  double theta = 0.15;
  double sigma = 0.2;

  OUProcess(int dim, double theta, double sigma);
  void reset() { state.setZero(); }
};

/// x <- x + theta * (0 - x) + sigma * N(0, I); returns the new x.
Eigen::VectorXd ou_step(OUProcess& proc, Rng& rng);

Eigen::VectorXd clip_action(const Eigen::VectorXd& a);

// ---------------------------------------------------------------------------
// Screening

struct ScreenConfig {
  double safe_tolerance = 0.3;
  int samples = 16;
  double sigma = 0.2;

  void validate() const;
};

struct ScreenResult {
  Eigen::VectorXd action;
  bool triggered = false;
  /// Evaluated set: column 0 is the proposal, then candidates in generation
  /// order. Only the proposal is present when the guard did not trigger.
  Eigen::MatrixXd evaluated;
  Eigen::VectorXd q;
  Eigen::Index chosen = 0;
};

/// Keeps the proposal when Q_C(s, a) <= tolerance, otherwise returns the
/// lowest-Q_C action among the proposal and `samples` clipped perturbations.
ScreenResult screen_action(const Eigen::VectorXd& state, const Eigen::VectorXd& proposal,
                           const NetworkParameters& safety_critic, const ScreenConfig& cfg,
                           Rng& rng);

// ---------------------------------------------------------------------------
// Actor and dual

struct ActorLoss {
  double loss = 0.0;
  double reward_term = 0.0;  // -mean Q_R
  double cost_term = 0.0;    // lambda * mean Q_C
  double kl_term = 0.0;      // kl_coef * mean ||pi - pi_old||^2 / (2 sigma^2)
  Eigen::VectorXd grad;
};

/// Lagrangian actor objective; critics are fixed functions of the action.
/// `safety_critic` may be null (unconstrained baseline).
ActorLoss actor_loss(const Eigen::MatrixXd& states, const NetworkParameters& actor,
                     const NetworkParameters& actor_old, const NetworkParameters& reward_critic,
                     const NetworkParameters* safety_critic, double lambda, double kl_coef,
                     double policy_sigma);

struct DualState {
  double lambda = 1.0;
  double lr = 0.02;
  double budget = 1.0;
  double episode_cost = 0.0;

  void accumulate(double cost) { episode_cost += cost; }
};

/// lambda <- max(0, lambda - lr * (budget - episode_cost)); resets the
/// episode accumulator.
DualState dual_update(DualState dual);

// ---------------------------------------------------------------------------
// Training

enum class RefineTarget { bellman, immediate };

struct AgentConfig {
  Method method = Method::usc;
  std::vector<int> hidden{32, 32};
  Activation safety_output = Activation::identity;
  double actor_lr = 2e-3;
  double critic_lr = 1e-3;
  double safety_lr = 1e-3;
  double dual_lr = 0.02;
  double lambda_init = 1.0;
  int batch_size = 64;
  std::size_t buffer_capacity = 200000;
  double tau = 5e-3;
  double ou_sigma = 0.2;
  double ou_theta = 0.15;
  double safe_tolerance = 0.3;
  int screen_samples = 16;
  double gn_damping = 1e-6;
  std::optional<InfluenceScope> influence_scope;  // unset: by parameter count
  double kl_coef = 0.01;
  double policy_sigma = 0.1;
  int alt_actions = 10;
  double lse_eps = 1e-8;
  int top_n = 4;
  int neighbours = 5;
  double trust_beta = 1.0;
  double trust_eps = 0.01;
  int warmup_batches = 10;
  RefineTarget refine_target = RefineTarget::bellman;
  /// Test hook: run the uncertainty machinery but force every weight to 0.
  bool zero_uncertainty_weights = false;

  void validate() const;
};

struct EpisodeRecord {
  int episode = 0;
  std::uint64_t layout_seed = 0;
  int steps = 0;
  double reward = 0.0;
  double cost = 0.0;
  bool success = false;
  double lambda = 0.0;  // after the episode's dual update
  int updates = 0;
  int screen_triggers = 0;
  double loss_safety = 0.0;
  double loss_bellman = 0.0;
  double loss_conservative = 0.0;
  double loss_reward = 0.0;
  double loss_actor = 0.0;
  double mean_u = 0.0;
  double mean_weight = 0.0;
  double refine_loss = 0.0;
  int trust_hits = 0;
  double wall_seconds = 0.0;
};

/// Per-update diagnostics, emitted to an optional step log.
struct UpdateRecord {
  int episode = 0;
  int step = 0;
  double loss_safety = 0.0;
  double loss_bellman = 0.0;
  double loss_conservative = 0.0;
  double loss_reward = 0.0;
  double loss_actor = 0.0;
  double mean_u = 0.0;
  double max_u = 0.0;
  double mean_weight = 0.0;
  double refine_loss = 0.0;
  int trust_hits = 0;
};

/// Networks and optimiser state of one agent.
struct AgentNets {
  NetworkParameters actor;
  NetworkParameters actor_target;
  NetworkParameters reward_critic;
  NetworkParameters reward_target;
  NetworkParameters safety_critic;
  NetworkParameters safety_target;
  AdamState actor_opt;
  AdamState reward_opt;
  AdamState safety_opt;

  static AgentNets create(const CmdpSpec& cmdp, const std::vector<int>& hidden, Rng& rng,
                          Activation safety_output = Activation::identity);
};

class Trainer {
 public:
  using TraceFn = std::function<void(std::string_view)>;
  using UpdateFn = std::function<void(const UpdateRecord&)>;

  Trainer(EnvConfig env, AgentConfig agent, std::uint64_t seed);

  EpisodeRecord run_episode();
  std::vector<EpisodeRecord> train(int episodes);

  /// Noise-free action with screening (when the method has a safety critic).
  Eigen::VectorXd act(const Eigen::VectorXd& state, bool explore);

  void set_trace(TraceFn fn) { trace_ = std::move(fn); }
  void set_update_log(UpdateFn fn) { update_log_ = std::move(fn); }

  const AgentNets& nets() const { return nets_; }
  AgentNets& nets() { return nets_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const DualState& dual() const { return dual_; }
  const EnvConfig& env_config() const { return env_cfg_; }
  const AgentConfig& agent_config() const { return cfg_; }
  std::uint64_t seed() const { return seeds_.master(); }
  int episodes_done() const { return episode_; }
  InfluenceScope influence_scope() const;
  /// Seed of the layout used by episode `episode` (0-based).
  std::uint64_t layout_seed(int episode) const;

 private:
  void update(EpisodeRecord& rec, int step);
  void emit(std::string_view what) {
    if (trace_) trace_(what);
  }

  EnvConfig env_cfg_;
  AgentConfig cfg_;
  CmdpSpec cmdp_;
  SeedTree seeds_;
  Rng explore_rng_;
  Rng sample_rng_;
  Rng alt_rng_;
  Rng screen_rng_;
  std::unique_ptr<Environment> env_;
  ReplayBuffer buffer_;
  AgentNets nets_;
  OUProcess ou_;
  DualState dual_;
  int episode_ = 0;
  TraceFn trace_;
  UpdateFn update_log_;
};

/// Realized discounted cost-to-go at every step of one recorded trajectory.
std::vector<double> discounted_cost_to_go(std::span<const double> costs, double gamma);

}  // namespace usc

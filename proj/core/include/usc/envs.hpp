#pragma once

// Kinematic constrained-MDP toy environments.
//
// PointGoal: a point agent drives to a goal disc while circular hazards charge
// a per-step contact cost. VelocityLimit: a 1-D runner rewarded for forward
// displacement and charged whenever its speed exceeds a threshold.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

namespace usc {

struct CmdpSpec {
  int state_dim = 0;
  int action_dim = 0;
  double gamma = 0.95;
  int horizon = 200;
  double budget = 1.0;  // allowed cost per episode

  void validate() const;
};

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  double cost = 0.0;
  bool terminal = false;
  bool success = false;
};

struct PointGoalConfig {
  double half_width = 2.0;
  int hazards = 5;
  double hazard_radius = 0.25;
  double goal_radius = 0.3;
  double contact_cost = 0.2;
  double shaping = 1.0;
  double goal_bonus = 5.0;
  double max_speed = 0.05;
  double clearance = 0.1;

  void validate() const;
};

struct VelocityLimitConfig {
  double velocity_threshold = 1.0;
  double violation_cost = 1.0;
  double damping = 0.8;
  double acceleration = 0.5;
  double dt = 0.1;

  void validate() const;
};

enum class EnvFamily { point_goal, velocity_limit };

std::string_view to_string(EnvFamily f);
EnvFamily env_family_from_string(std::string_view name);

struct EnvConfig {
  EnvFamily family = EnvFamily::point_goal;
  double gamma = 0.95;
  int horizon = 200;
  double budget = 1.0;
  PointGoalConfig point_goal;
  VelocityLimitConfig velocity_limit;

  void validate() const;
  CmdpSpec cmdp() const;
};

/// Placement rejection sampling gives up after this many attempts.
inline constexpr int kPlacementRetries = 1000;

struct Layout {
  Eigen::Vector2d agent;
  Eigen::Vector2d goal;
  std::vector<Eigen::Vector2d> hazards;
};

/// Seeded random placement satisfying the pairwise separation rule. Throws
/// ConfigError when no feasible layout is found.
Layout sample_layout(const PointGoalConfig& cfg, std::uint64_t seed);

/// True when every pair of objects is separated by radii plus clearance and
/// every object lies inside the arena.
bool layout_is_separated(const PointGoalConfig& cfg, const Layout& layout);

/// Number of hazards whose disc contains `position` (boundary inclusive).
int hazard_contacts(const PointGoalConfig& cfg, const Layout& layout,
                    const Eigen::Vector2d& position);

/// Observation for an agent at `position`: position, goal - position, then
/// hazard - position for each hazard in placement order.
Eigen::VectorXd point_goal_observation(const Layout& layout, const Eigen::Vector2d& position);

class Environment {
 public:
  virtual ~Environment() = default;

  virtual CmdpSpec spec() const = 0;
  virtual Eigen::VectorXd reset(std::uint64_t seed) = 0;
  /// Throws ProtocolError when called before reset or after a terminal step.
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
  virtual int steps_taken() const = 0;
};

class PointGoalEnv final : public Environment {
 public:
  PointGoalEnv(PointGoalConfig cfg, int horizon, double gamma, double budget);

  CmdpSpec spec() const override;
  Eigen::VectorXd reset(std::uint64_t seed) override;
  StepResult step(const Eigen::VectorXd& action) override;
  int steps_taken() const override { return t_; }

  const Layout& layout() const { return layout_; }
  const PointGoalConfig& config() const { return cfg_; }
  /// Moves the agent without advancing time; used to stage test scenarios.
  void place_agent(const Eigen::Vector2d& position);
  Eigen::VectorXd observation() const;

 private:
  PointGoalConfig cfg_;
  int horizon_;
  double gamma_;
  double budget_;
  Layout layout_;
  Eigen::Vector2d position_ = Eigen::Vector2d::Zero();
  int t_ = 0;
  bool active_ = false;
};

class VelocityLimitEnv final : public Environment {
 public:
  VelocityLimitEnv(VelocityLimitConfig cfg, int horizon, double gamma, double budget);

  CmdpSpec spec() const override;
  Eigen::VectorXd reset(std::uint64_t seed) override;
  StepResult step(const Eigen::VectorXd& action) override;
  int steps_taken() const override { return t_; }

  double velocity() const { return velocity_; }
  void set_velocity(double v) { velocity_ = v; }

 private:
  Eigen::VectorXd observation() const;

  VelocityLimitConfig cfg_;
  int horizon_;
  double gamma_;
  double budget_;
  double position_ = 0.0;
  double velocity_ = 0.0;
  int t_ = 0;
  bool active_ = false;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg);

/// Square grid of cell-centred samples over the arena [-hw, hw]^2, row-major
/// with y as the slow index.
struct Grid {
  int resolution = 0;
  double half_width = 0.0;
  std::vector<double> values;

  Grid() = default;
  Grid(int resolution, double half_width);

  double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * resolution + ix]; }
  double at(int ix, int iy) const {
    return values[static_cast<std::size_t>(iy) * resolution + ix];
  }
  Eigen::Vector2d cell_center(int ix, int iy) const;
  std::size_t size() const { return values.size(); }
};

using GroundTruthField = Grid;

/// Instantaneous contact cost at every cell centre for the seeded layout.
GroundTruthField ground_truth_cost_field(const EnvConfig& cfg, std::uint64_t layout_seed,
                                         int resolution);
GroundTruthField ground_truth_cost_field(const PointGoalConfig& cfg, const Layout& layout,
                                         int resolution);

}  // namespace usc

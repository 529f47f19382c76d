#include "usc/envs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "usc/errors.hpp"
#include "usc/rng.hpp"

namespace usc {

void CmdpSpec::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(budget >= 0.0)) throw ConfigError("budget must be >= 0");
}

void PointGoalConfig::validate() const {
  if (!(half_width > 0.0)) throw ConfigError("point_goal.half_width must be > 0");
  if (hazards < 0) throw ConfigError("point_goal.hazards must be >= 0");
  if (!(hazard_radius > 0.0)) throw ConfigError("point_goal.hazard_radius must be > 0");
  if (!(goal_radius > 0.0)) throw ConfigError("point_goal.goal_radius must be > 0");
  if (!(contact_cost >= 0.0)) throw ConfigError("point_goal.contact_cost must be >= 0");
  if (!(max_speed > 0.0)) throw ConfigError("point_goal.max_speed must be > 0");
  if (!(clearance >= 0.0)) throw ConfigError("point_goal.clearance must be >= 0");
}

void VelocityLimitConfig::validate() const {
  if (!(velocity_threshold > 0.0)) {
    throw ConfigError("velocity_limit.velocity_threshold must be > 0");
  }
  if (!(violation_cost >= 0.0)) throw ConfigError("velocity_limit.violation_cost must be >= 0");
  if (!(damping >= 0.0 && damping < 1.0)) {
    throw ConfigError("velocity_limit.damping must lie in [0, 1)");
  }
  if (!(dt > 0.0)) throw ConfigError("velocity_limit.dt must be > 0");
}

std::string_view to_string(EnvFamily f) {
  return f == EnvFamily::point_goal ? "point_goal" : "velocity_limit";
}

EnvFamily env_family_from_string(std::string_view name) {
  if (name == "point_goal") return EnvFamily::point_goal;
  if (name == "velocity_limit") return EnvFamily::velocity_limit;
  throw ConfigError("unknown environment family '" + std::string(name) + "'");
}

void EnvConfig::validate() const {
  cmdp().validate();
  point_goal.validate();
  velocity_limit.validate();
}

CmdpSpec EnvConfig::cmdp() const {
  CmdpSpec s;
  if (family == EnvFamily::point_goal) {
    s.state_dim = 4 + 2 * point_goal.hazards;
    s.action_dim = 2;
  } else {
    s.state_dim = 2;
    s.action_dim = 1;
  }
  s.gamma = gamma;
  s.horizon = horizon;
  s.budget = budget;
  return s;
}

// ---------------------------------------------------------------------------
// PointGoal

namespace {

Eigen::Vector2d uniform_in_box(Rng& rng, double half) {
  std::uniform_real_distribution<double> d(-half, half);
  const double x = d(rng);
  const double y = d(rng);
  return {x, y};
}

bool separated(const Eigen::Vector2d& a, double ra, const Eigen::Vector2d& b, double rb,
               double clearance) {
  return (a - b).norm() >= ra + rb + clearance;
}

}  // namespace

bool layout_is_separated(const PointGoalConfig& cfg, const Layout& layout) {
  const double hw = cfg.half_width;
  auto inside = [hw](const Eigen::Vector2d& p, double r) {
    return std::abs(p.x()) <= hw - r && std::abs(p.y()) <= hw - r;
  };
  if (!inside(layout.agent, 0.0) || !inside(layout.goal, cfg.goal_radius)) return false;
  if (!separated(layout.agent, 0.0, layout.goal, cfg.goal_radius, cfg.clearance)) return false;
  for (std::size_t i = 0; i < layout.hazards.size(); ++i) {
    const auto& h = layout.hazards[i];
    if (!inside(h, cfg.hazard_radius)) return false;
    if (!separated(h, cfg.hazard_radius, layout.agent, 0.0, cfg.clearance)) return false;
    if (!separated(h, cfg.hazard_radius, layout.goal, cfg.goal_radius, cfg.clearance)) {
      return false;
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (!separated(h, cfg.hazard_radius, layout.hazards[j], cfg.hazard_radius,
                     cfg.clearance)) {
        return false;
      }
    }
  }
  return true;
}

Layout sample_layout(const PointGoalConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(splitmix64(seed));
  for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
    Layout layout;
    layout.goal = uniform_in_box(rng, cfg.half_width - cfg.goal_radius);
    layout.agent = uniform_in_box(rng, cfg.half_width);
    for (int h = 0; h < cfg.hazards; ++h) {
      layout.hazards.push_back(uniform_in_box(rng, cfg.half_width - cfg.hazard_radius));
    }
    if (layout_is_separated(cfg, layout)) return layout;
  }
  throw ConfigError("could not place " + std::to_string(cfg.hazards) +
                    " hazards with the requested separation after " +
                    std::to_string(kPlacementRetries) + " attempts");
}

int hazard_contacts(const PointGoalConfig& cfg, const Layout& layout,
                    const Eigen::Vector2d& position) {
  int n = 0;
  for (const auto& h : layout.hazards) {
    if ((position - h).norm() <= cfg.hazard_radius) ++n;
  }
  return n;
}

Eigen::VectorXd point_goal_observation(const Layout& layout, const Eigen::Vector2d& position) {
  Eigen::VectorXd obs(4 + 2 * static_cast<Eigen::Index>(layout.hazards.size()));
  obs.segment<2>(0) = position;
  obs.segment<2>(2) = layout.goal - position;
  for (std::size_t i = 0; i < layout.hazards.size(); ++i) {
    obs.segment<2>(4 + 2 * static_cast<Eigen::Index>(i)) = layout.hazards[i] - position;
  }
  return obs;
}

PointGoalEnv::PointGoalEnv(PointGoalConfig cfg, int horizon, double gamma, double budget)
    : cfg_(cfg), horizon_(horizon), gamma_(gamma), budget_(budget) {
  cfg_.validate();
  spec().validate();
}

CmdpSpec PointGoalEnv::spec() const {
  return {4 + 2 * cfg_.hazards, 2, gamma_, horizon_, budget_};
}

Eigen::VectorXd PointGoalEnv::reset(std::uint64_t seed) {
  layout_ = sample_layout(cfg_, seed);
  position_ = layout_.agent;
  t_ = 0;
  active_ = true;
  return observation();
}

void PointGoalEnv::place_agent(const Eigen::Vector2d& position) { position_ = position; }

Eigen::VectorXd PointGoalEnv::observation() const {
  return point_goal_observation(layout_, position_);
}

StepResult PointGoalEnv::step(const Eigen::VectorXd& action) {
  if (!active_) throw ProtocolError("step() called on an inactive episode; call reset()");
  if (action.size() != 2) {
    throw InvalidInputError("point_goal expects a 2-dimensional action");
  }
  const Eigen::Vector2d move = action.cwiseMax(-1.0).cwiseMin(1.0) * cfg_.max_speed;
  const double d_last = (layout_.goal - position_).norm();
  position_ = (position_ + move).cwiseMax(-cfg_.half_width).cwiseMin(cfg_.half_width);
  const double d_now = (layout_.goal - position_).norm();
  ++t_;

  StepResult r;
  r.reward = (d_last - d_now) * cfg_.shaping;
  r.cost = cfg_.contact_cost * hazard_contacts(cfg_, layout_, position_);
  if (d_now <= cfg_.goal_radius) {
    r.reward += cfg_.goal_bonus;
    r.success = true;
  }
  r.terminal = r.success || t_ >= horizon_;
  r.observation = observation();
  active_ = !r.terminal;
  return r;
}

// ---------------------------------------------------------------------------
// VelocityLimit

VelocityLimitEnv::VelocityLimitEnv(VelocityLimitConfig cfg, int horizon, double gamma,
                                   double budget)
    : cfg_(cfg), horizon_(horizon), gamma_(gamma), budget_(budget) {
  cfg_.validate();
  spec().validate();
}

CmdpSpec VelocityLimitEnv::spec() const { return {2, 1, gamma_, horizon_, budget_}; }

Eigen::VectorXd VelocityLimitEnv::reset(std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  position_ = 0.0;
  velocity_ = jitter(rng);
  t_ = 0;
  active_ = true;
  return observation();
}

Eigen::VectorXd VelocityLimitEnv::observation() const {
  Eigen::VectorXd o(2);
  o << position_, velocity_;
  return o;
}

StepResult VelocityLimitEnv::step(const Eigen::VectorXd& action) {
  if (!active_) throw ProtocolError("step() called on an inactive episode; call reset()");
  if (action.size() != 1) {
    throw InvalidInputError("velocity_limit expects a 1-dimensional action");
  }
  const double a = std::clamp(action[0], -1.0, 1.0);
  velocity_ = cfg_.damping * velocity_ + cfg_.acceleration * a;
  const double dx = velocity_ * cfg_.dt;
  position_ += dx;
  ++t_;

  StepResult r;
  r.reward = dx;
  r.cost = std::abs(velocity_) > cfg_.velocity_threshold ? cfg_.violation_cost : 0.0;
  r.terminal = t_ >= horizon_;
  r.observation = observation();
  active_ = !r.terminal;
  return r;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg) {
  cfg.validate();
  if (cfg.family == EnvFamily::point_goal) {
    return std::make_unique<PointGoalEnv>(cfg.point_goal, cfg.horizon, cfg.gamma, cfg.budget);
  }
  return std::make_unique<VelocityLimitEnv>(cfg.velocity_limit, cfg.horizon, cfg.gamma,
                                            cfg.budget);
}

// ---------------------------------------------------------------------------
// Cost fields

Grid::Grid(int resolution_, double half_width_)
    : resolution(resolution_),
      half_width(half_width_),
      values(static_cast<std::size_t>(resolution_) * resolution_, 0.0) {
  if (resolution_ < 1) throw InvalidInputError("grid resolution must be >= 1");
}

Eigen::Vector2d Grid::cell_center(int ix, int iy) const {
  const double cell = 2.0 * half_width / resolution;
  return {-half_width + (ix + 0.5) * cell, -half_width + (iy + 0.5) * cell};
}

GroundTruthField ground_truth_cost_field(const PointGoalConfig& cfg, const Layout& layout,
                                         int resolution) {
  GroundTruthField field(resolution, cfg.half_width);
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      field.at(ix, iy) =
          cfg.contact_cost * hazard_contacts(cfg, layout, field.cell_center(ix, iy));
    }
  }
  return field;
}

GroundTruthField ground_truth_cost_field(const EnvConfig& cfg, std::uint64_t layout_seed,
                                         int resolution) {
  if (cfg.family != EnvFamily::point_goal) {
    throw CapabilityError("ground-truth cost fields exist only for point_goal environments");
  }
  return ground_truth_cost_field(cfg.point_goal, sample_layout(cfg.point_goal, layout_seed),
                                 resolution);
}

}  // namespace usc

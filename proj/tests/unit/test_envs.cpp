#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "usc/envs.hpp"
#include "usc/errors.hpp"
#include "usc/rng.hpp"

using namespace usc;

namespace {

PointGoalEnv make_point_goal(PointGoalConfig cfg = {}, int horizon = 200) {
  return PointGoalEnv(cfg, horizon, 0.95, 1.0);
}

}  // namespace

TEST_CASE("same seed gives identical observations") {
  auto a = make_point_goal();
  auto b = make_point_goal();
  CHECK(a.reset(17) == b.reset(17));
  CHECK(a.reset(17) != a.reset(18));
}

TEST_CASE("observation layout: position, goal offset, hazard offsets") {
  auto env = make_point_goal();
  const Eigen::VectorXd obs = env.reset(3);
  const Layout& l = env.layout();
  REQUIRE(obs.size() == 14);
  CHECK(obs.segment<2>(0) == l.agent);
  CHECK(obs.segment<2>(2) == l.goal - l.agent);
  for (int h = 0; h < 5; ++h) CHECK(obs.segment<2>(4 + 2 * h) == l.hazards[h] - l.agent);
  CHECK(env.spec().state_dim == 14);
  CHECK(env.spec().action_dim == 2);
}

TEST_CASE("no hazards means no hazard features and no cost") {
  PointGoalConfig cfg;
  cfg.hazards = 0;
  auto env = make_point_goal(cfg, 50);
  CHECK(env.reset(1).size() == 4);
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  bool done = false;
  while (!done) {
    const StepResult r = env.step(Eigen::Vector2d(u(rng), u(rng)));
    CHECK(r.cost == 0.0);
    done = r.terminal;
  }
}

TEST_CASE("100 seeded layouts satisfy the separation rule") {
  const PointGoalConfig cfg;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Layout l = sample_layout(cfg, s);
    CHECK(l.hazards.size() == 5);
    CHECK(layout_is_separated(cfg, l));
    // Independent pairwise check.
    for (std::size_t i = 0; i < l.hazards.size(); ++i) {
      CHECK((l.hazards[i] - l.goal).norm() >= cfg.hazard_radius + cfg.goal_radius + cfg.clearance);
      CHECK((l.hazards[i] - l.agent).norm() >= cfg.hazard_radius + cfg.clearance);
      for (std::size_t j = 0; j < i; ++j) {
        CHECK((l.hazards[i] - l.hazards[j]).norm() >= 2 * cfg.hazard_radius + cfg.clearance);
      }
    }
  }
}

TEST_CASE("infeasible placement is a configuration error") {
  PointGoalConfig cfg;
  cfg.hazards = 200;
  CHECK_THROWS_AS(sample_layout(cfg, 0), ConfigError);
}

TEST_CASE("moving toward the goal earns the shaped distance reward") {
  auto env = make_point_goal();
  env.reset(5);
  const Layout l = env.layout();
  const Eigen::Vector2d start(l.goal.x() > 0 ? l.goal.x() - 1.0 : l.goal.x() + 1.0, l.goal.y());
  env.place_agent(start);
  const Eigen::Vector2d dir = (l.goal - start).normalized();
  const StepResult r = env.step(dir);
  const double d0 = (l.goal - start).norm();
  const double d1 = (l.goal - (start + dir * 0.05).cwiseMax(-2.0).cwiseMin(2.0)).norm();
  CHECK(r.reward == doctest::Approx(d0 - d1).epsilon(1e-12));
  CHECK(r.reward > 0.0);
}

TEST_CASE("hazard contact costs 0.2 per step and stacks") {
  auto env = make_point_goal();
  env.reset(9);
  env.place_agent(env.layout().hazards[0]);
  const StepResult r = env.step(Eigen::Vector2d::Zero());
  CHECK(r.cost == doctest::Approx(0.2));

  PointGoalConfig cfg;
  Layout overlap;
  overlap.agent = Eigen::Vector2d(0, 0);
  overlap.goal = Eigen::Vector2d(1.5, 1.5);
  overlap.hazards = {Eigen::Vector2d(0.1, 0), Eigen::Vector2d(-0.1, 0), Eigen::Vector2d(1, -1)};
  CHECK(hazard_contacts(cfg, overlap, Eigen::Vector2d(0, 0)) == 2);
  CHECK(cfg.contact_cost * hazard_contacts(cfg, overlap, Eigen::Vector2d(0, 0)) ==
        doctest::Approx(0.4));
}

TEST_CASE("reaching the goal pays the bonus and terminates") {
  auto env = make_point_goal();
  env.reset(11);
  const Eigen::Vector2d g = env.layout().goal;
  const double side = g.x() > 0 ? -1.0 : 1.0;
  env.place_agent(g + Eigen::Vector2d(side * 0.32, 0));
  const StepResult r = env.step(Eigen::Vector2d(-side, 0));
  CHECK(r.success);
  CHECK(r.terminal);
  CHECK(r.reward == doctest::Approx(5.0 + 0.05));
  CHECK_THROWS_AS(env.step(Eigen::Vector2d::Zero()), ProtocolError);
}

TEST_CASE("step before reset is a protocol error") {
  auto env = make_point_goal();
  CHECK_THROWS_AS(env.step(Eigen::Vector2d::Zero()), ProtocolError);
}

TEST_CASE("episodes end within the horizon, costs are nonnegative, shaping telescopes") {
  auto env = make_point_goal({}, 60);
  Rng rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    env.reset(s);
    const double d0 = (env.layout().goal - env.layout().agent).norm();
    double shaping = 0.0;
    int steps = 0;
    bool done = false;
    StepResult r;
    while (!done) {
      r = env.step(Eigen::Vector2d(u(rng), u(rng)));
      CHECK(r.cost >= 0.0);
      shaping += r.reward - (r.success ? 5.0 : 0.0);
      ++steps;
      done = r.terminal;
    }
    CHECK(steps <= 60);
    const double d1 = r.observation.segment<2>(2).norm();
    CHECK(shaping == doctest::Approx(d0 - d1).epsilon(1e-9));
  }
}

TEST_CASE("fixed seed and actions reproduce trajectories bitwise") {
  auto run = [] {
    auto env = make_point_goal({}, 40);
    env.reset(21);
    std::vector<double> trace;
    Rng rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    bool done = false;
    while (!done) {
      const StepResult r = env.step(Eigen::Vector2d(u(rng), u(rng)));
      trace.push_back(r.reward);
      trace.push_back(r.cost);
      for (Eigen::Index i = 0; i < r.observation.size(); ++i) trace.push_back(r.observation[i]);
      done = r.terminal;
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("velocity limit: reward is displacement, cost above the threshold") {
  VelocityLimitConfig cfg;
  VelocityLimitEnv env(cfg, 100, 0.95, 1.0);
  env.reset(1);
  env.set_velocity(0.0);
  StepResult r = env.step(Eigen::VectorXd::Constant(1, 1.0));
  CHECK(r.reward == doctest::Approx(0.5 * 0.1));
  CHECK(r.cost == 0.0);
  env.set_velocity(2.0);
  r = env.step(Eigen::VectorXd::Constant(1, 1.0));
  CHECK(env.velocity() > cfg.velocity_threshold);
  CHECK(r.cost == 1.0);
  CHECK(r.observation.size() == 2);
}

TEST_CASE("ground-truth field values") {
  EnvConfig cfg;
  const Layout l = sample_layout(cfg.point_goal, 77);
  const GroundTruthField f = ground_truth_cost_field(cfg, 77, 64);
  CHECK(f.resolution == 64);
  for (int iy = 0; iy < 64; ++iy) {
    for (int ix = 0; ix < 64; ++ix) {
      const Eigen::Vector2d c = f.cell_center(ix, iy);
      double nearest = 1e9;
      for (const auto& h : l.hazards) nearest = std::min(nearest, (c - h).norm());
      if (nearest <= cfg.point_goal.hazard_radius) {
        CHECK(f.at(ix, iy) == doctest::Approx(0.2));
      } else {
        CHECK(f.at(ix, iy) == 0.0);
      }
    }
  }
  // A hazard centre evaluated directly.
  CHECK(cfg.point_goal.contact_cost * hazard_contacts(cfg.point_goal, l, l.hazards[0]) ==
        doctest::Approx(0.2));
}

TEST_CASE("hazard area fraction matches the analytic ratio") {
  EnvConfig cfg;
  const GroundTruthField f = ground_truth_cost_field(cfg, 5, 400);
  std::size_t hits = 0;
  for (double v : f.values) hits += v > 0.0 ? 1 : 0;
  const double frac = static_cast<double>(hits) / static_cast<double>(f.size());
  const double analytic = 5 * std::numbers::pi * 0.25 * 0.25 / 16.0;
  CHECK(std::abs(frac - analytic) / analytic < 0.02);
}

TEST_CASE("ground truth for velocity limit is a capability error") {
  EnvConfig cfg;
  cfg.family = EnvFamily::velocity_limit;
  CHECK_THROWS_AS(ground_truth_cost_field(cfg, 1, 8), CapabilityError);
}

TEST_CASE("grid cell centres; G = 1 is the arena centre") {
  Grid one(1, 2.0);
  CHECK(one.cell_center(0, 0) == Eigen::Vector2d(0, 0));
  Grid g(4, 2.0);
  CHECK(g.cell_center(0, 0) == Eigen::Vector2d(-1.5, -1.5));
  CHECK(g.cell_center(3, 1) == Eigen::Vector2d(1.5, -0.5));
}

TEST_CASE("environment config validation") {
  EnvConfig cfg;
  cfg.gamma = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EnvConfig{};
  cfg.point_goal.hazard_radius = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(env_family_from_string("velocity_limit") == EnvFamily::velocity_limit);
  CHECK_THROWS_AS(env_family_from_string("mujoco"), ConfigError);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "usc/errors.hpp"
#include "usc/eval.hpp"

using namespace usc;

namespace {

Grid grid3(std::initializer_list<double> v) {
  Grid g(3, 1.0);
  g.values.assign(v);
  return g;
}

AgentNets make_nets(const EnvConfig& env, std::uint64_t seed) {
  Rng rng(seed);
  return AgentNets::create(env.cmdp(), {8}, rng);
}

EnvConfig short_env() {
  EnvConfig e;
  e.horizon = 30;
  return e;
}

}  // namespace

TEST_CASE("probe actions are the eight nonzero lattice points") {
  const Eigen::MatrixXd p = probe_actions();
  REQUIRE(p.cols() == 8);
  for (Eigen::Index k = 0; k < 8; ++k) {
    CHECK(p.col(k).cwiseAbs().maxCoeff() == 1.0);
    for (Eigen::Index j = 0; j < k; ++j) CHECK(p.col(k) != p.col(j));
  }
}

TEST_CASE("cost map of a constant critic") {
  const EnvConfig env;
  AgentNets nets = make_nets(env, 1);
  nets.safety_critic.flat().setZero();
  nets.safety_critic.bias(nets.safety_critic.spec().num_layers() - 1)[0] = 0.25;
  const CostMap m = predict_cost_map(nets.actor, nets.safety_critic, env, 7, 8);
  CHECK(m.predicted.size() == 64);
  for (double v : m.predicted.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const CostMap one = predict_cost_map(nets.actor, nets.safety_critic, env, 7, 1);
  CHECK(one.predicted.size() == 1);
}

TEST_CASE("cost map matches a per-cell evaluation") {
  const EnvConfig env;
  const AgentNets nets = make_nets(env, 2);
  const Layout layout = sample_layout(env.point_goal, 11);
  const CostMap m = predict_cost_map(nets.actor, nets.safety_critic, env, 11, 32);
  const CostMap probe =
      predict_cost_map(nets.actor, nets.safety_critic, env, 11, 32, MapAction::probe_min);
  const Eigen::MatrixXd probes = probe_actions();
  for (int iy = 0; iy < 32; iy += 3) {
    for (int ix = 0; ix < 32; ix += 3) {
      const Eigen::VectorXd s = point_goal_observation(layout, m.predicted.cell_center(ix, iy));
      const Eigen::VectorXd a = forward(nets.actor, s);
      Eigen::VectorXd x(s.size() + 2);
      x << s, a;
      CHECK(m.predicted.at(ix, iy) == doctest::Approx(forward(nets.safety_critic, x)[0]).epsilon(1e-12));
      double best = 1e300;
      for (Eigen::Index k = 0; k < 8; ++k) {
        x << s, probes.col(k);
        best = std::min(best, forward(nets.safety_critic, x)[0]);
      }
      CHECK(probe.predicted.at(ix, iy) == doctest::Approx(best).epsilon(1e-12));
    }
  }
  const GroundTruthField truth = ground_truth_cost_field(env, 11, 32);
  CHECK(m.truth.values == truth.values);
}

TEST_CASE("cost maps need the point-goal family") {
  EnvConfig env;
  env.family = EnvFamily::velocity_limit;
  const AgentNets nets = make_nets(env, 3);
  CHECK_THROWS_AS(predict_cost_map(nets.actor, nets.safety_critic, env, 1, 8), CapabilityError);
}

TEST_CASE("map metric examples") {
  const Grid truth = grid3({1, 0, 0, 1, 0, 0, 1, 0, 0});
  const Grid flat = grid3({5, 5, 5, 5, 5, 5, 5, 5, 5});
  CHECK(gradient_mse(truth, truth) == 0.0);
  CHECK(contrast_error(truth, truth) == 0.0);
  CHECK(entropy_error(truth, truth) == 0.0);
  CHECK(gradient_mse(flat, truth) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(contrast_error(flat, truth) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(entropy_error(flat, truth) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(map_entropy(flat.values) == doctest::Approx(std::log(9.0)).epsilon(1e-14));
  CHECK_THROWS_AS(gradient_mse(Grid(2, 1.0), Grid(2, 1.0)), InvalidInputError);
  CHECK_THROWS_AS(gradient_mse(truth, Grid(4, 1.0)), InvalidInputError);
  CHECK(metric_definitions().size() == 3);
}

TEST_CASE("map metrics are invariant to positive affine maps of the prediction") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  Grid truth(6, 1.0), pred(6, 1.0), moved(6, 1.0);
  for (std::size_t i = 0; i < 36; ++i) {
    truth.values[i] = u(rng) > 0.7 ? 0.2 : 0.0;
    pred.values[i] = u(rng);
    moved.values[i] = 3.0 * pred.values[i] - 2.0;
  }
  CHECK(gradient_mse(moved, truth) == doctest::Approx(gradient_mse(pred, truth)).epsilon(1e-12));
  CHECK(contrast_error(moved, truth) == doctest::Approx(contrast_error(pred, truth)).epsilon(1e-12));
  const auto a = normalize_map(pred.values);
  const auto b = normalize_map(moved.values);
  for (std::size_t i = 0; i < 36; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("gradient_mse against a loop oracle") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  const int g = 7;
  Grid p(g, 1.0), t(g, 1.0);
  for (auto& v : p.values) v = u(rng);
  for (auto& v : t.values) v = u(rng);
  const auto np = normalize_map(p.values);
  const auto nt = normalize_map(t.values);
  auto v = [&](const std::vector<double>& m, int x, int y) { return m[static_cast<std::size_t>(y * g + x)]; };
  double total = 0.0;
  for (int y = 1; y < g - 1; ++y) {
    for (int x = 1; x < g - 1; ++x) {
      const double gxp = (v(np, x + 1, y) - v(np, x - 1, y)) / 2, gxt = (v(nt, x + 1, y) - v(nt, x - 1, y)) / 2;
      const double gyp = (v(np, x, y + 1) - v(np, x, y - 1)) / 2, gyt = (v(nt, x, y + 1) - v(nt, x, y - 1)) / 2;
      total += (gxp - gxt) * (gxp - gxt) + (gyp - gyt) * (gyp - gyt);
    }
  }
  CHECK(gradient_mse(p, t) == doctest::Approx(total / 25).epsilon(1e-12));
}

TEST_CASE("reliability curve binning") {
  CalibrationData d;
  for (int i = 0; i < 10; ++i) d.add(9 - i, i);  // u descending as inserted
  const auto bins = reliability_curve(d, 3);
  REQUIRE(bins.size() == 3);
  CHECK(bins[0].count == 4);
  CHECK(bins[1].count == 3);
  CHECK(bins[2].count == 3);
  // Lowest uncertainties are 0..3, carrying errors 9..6.
  CHECK(bins[0].mean_uncertainty == 1.5);
  CHECK(bins[0].mean_error == 7.5);
  CHECK(bins[2].mean_uncertainty == 8.0);
  CHECK(bins[2].mean_error == 1.0);
  CHECK_THROWS_AS(reliability_curve(d, 11), StateError);
  CHECK_THROWS_AS(reliability_curve(d, 0), InvalidInputError);
}

TEST_CASE("risk-coverage against a sort oracle") {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  CalibrationData d;
  for (int i = 0; i < 37; ++i) d.add(u(rng), u(rng));
  std::vector<std::size_t> order(37);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d.uncertainty[a] < d.uncertainty[b]; });
  const auto pts = risk_coverage(d);
  REQUIRE(pts.size() == 10);
  for (int k = 1; k <= 10; ++k) {
    const auto keep = static_cast<std::size_t>(std::ceil(k * 37 / 10.0));
    double s = 0.0;
    for (std::size_t i = 0; i < keep; ++i) s += d.error[order[i]];
    CHECK(pts[static_cast<std::size_t>(k - 1)].coverage == doctest::Approx(k / 10.0));
    CHECK(pts[static_cast<std::size_t>(k - 1)].mean_error == doctest::Approx(s / keep).epsilon(1e-12));
  }
  CHECK(risk_coverage(CalibrationData{}).empty());
}

TEST_CASE("spearman correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 4, 6, 8, 10};
  const std::vector<double> r{5, 4, 3, 2, 1};
  const std::vector<double> c{1, 1, 1, 1, 1};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  CHECK(spearman(x, r) == doctest::Approx(-1.0));
  CHECK(spearman(x, c) == 0.0);
  // Ties take average ranks: y ranks (1.5, 1.5, 3, 4).
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> b{7, 7, 8, 9};
  const double ra[] = {1, 2, 3, 4}, rb[] = {1.5, 1.5, 3, 4};
  double ma = 2.5, mb = 2.5, sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  CHECK(spearman(a, b) == doctest::Approx(sab / std::sqrt(saa * sbb)).epsilon(1e-14));
}

TEST_CASE("expected maximum of a two-valued critic") {
  CHECK(expected_max(0, 1, 0.5, 1) == 0.5);
  CHECK(expected_max(0, 1, 0.1, 10) == doctest::Approx(1 - std::pow(0.9, 10)).epsilon(1e-15));
  CHECK(expected_max(2, 3, 0.0, 5) == 2.0);
}

TEST_CASE("theorem check: Monte-Carlo agrees with the closed form") {
  TheoremConfig cfg;
  Rng rng(7);
  const TheoremResult r = theorem1_check(cfg, rng);
  CHECK(r.pass);
  CHECK(r.bound == doctest::Approx(0.3477).epsilon(1e-4));
  CHECK(std::abs(r.gap - r.closed_form_gap) < 3 * r.gap_se + 1e-12);
  CHECK(std::abs(r.mean_max_unif - expected_max(0, 1, 0.5, 10)) < 0.01);
  CHECK(std::abs(r.mean_max_pi - expected_max(0, 1, 0.1, 10)) < 0.01);
  CHECK(r.lse_bound == doctest::Approx(r.bound - std::log(10.0)).epsilon(1e-14));
  CHECK_FALSE(r.low_draws);

  for (int m : {1, 3, 30}) {
    for (double pp : {0.0, 0.2}) {
      TheoremConfig c;
      c.m = m;
      c.p_pi = pp;
      c.p_unif = 0.6;
      c.lower = -1.0;
      c.upper = 2.0;
      c.tau = 1.5;
      c.draws = 20000;
      Rng rr(static_cast<std::uint64_t>(m) * 10 + static_cast<std::uint64_t>(pp * 10));
      const TheoremResult t = theorem1_check(c, rr);
      CHECK(std::abs(t.gap - t.closed_form_gap) < 4 * t.gap_se + 1e-9);
      CHECK(t.pass);
    }
  }

  TheoremConfig few;
  few.draws = 500;
  Rng r2(1);
  CHECK(theorem1_check(few, r2).low_draws);
  TheoremConfig bad;
  bad.p_unif = 1.5;
  CHECK_THROWS_AS(theorem1_check(bad, r2), InvalidInputError);
}

TEST_CASE("deployment rollouts") {
  const EnvConfig env = short_env();
  const AgentNets nets = make_nets(env, 8);
  AgentConfig agent;
  agent.method = Method::usc;
  CHECK(deploy(nets, agent, env, 0, 1).empty());
  const DeploySummary empty = summarize(std::vector<DeployEpisode>{});
  CHECK(empty.episodes == 0);

  const auto a = deploy(nets, agent, env, 4, 9);
  const auto b = deploy(nets, agent, env, 4, 9);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a[i].reward == b[i].reward);
    CHECK(a[i].cost == b[i].cost);
    CHECK(a[i].layout_seed == deploy_layout_seed(9, static_cast<int>(i)));
    CHECK(a[i].steps <= 30);
  }
  CHECK(deploy_layout_seed(9, 0) != deploy_layout_seed(10, 0));
}

TEST_CASE("deployment summary statistics") {
  std::vector<DeployEpisode> eps(4);
  const double rewards[] = {1, 2, 3, 6}, costs[] = {0, 0, 1, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    eps[i].reward = rewards[i];
    eps[i].cost = costs[i];
    eps[i].success = i % 2 == 0;
  }
  const DeploySummary s = summarize(eps);
  CHECK(s.episodes == 4);
  CHECK(s.mean_reward == 3.0);
  CHECK(s.std_reward == doctest::Approx(std::sqrt(3.5)));
  CHECK(s.mean_cost == 0.5);
  CHECK(s.std_cost == doctest::Approx(0.5));
  CHECK(s.success_rate == 0.5);
}

TEST_CASE("final window and Pareto aggregation") {
  std::vector<EpisodeRecord> recs(60);
  for (int i = 0; i < 60; ++i) {
    recs[static_cast<std::size_t>(i)].reward = i;
    recs[static_cast<std::size_t>(i)].cost = i < 10 ? 100.0 : 1.0;
  }
  const RunOutcome o = final_window("usc", recs);
  CHECK(o.reward == doctest::Approx(34.5));
  CHECK(o.cost == 1.0);
  const RunOutcome shortrun = final_window("usc", std::span(recs).first(4));
  CHECK(shortrun.reward == 1.5);

  const std::vector<RunOutcome> single{{"csc", 2.0, 0.5}};
  const auto p1 = pareto_export(single);
  REQUIRE(p1.size() == 1);
  CHECK(p1[0].std_reward == 0.0);
  CHECK(p1[0].runs == 1);

  const std::vector<RunOutcome> two{{"usc", 1.0, 0.0}, {"usc", 3.0, 2.0}};
  const auto p2 = pareto_export(two);
  CHECK(p2[0].mean_reward == 2.0);
  CHECK(p2[0].std_reward == 1.0);
  CHECK(p2[0].std_cost == 1.0);

  Rng rng(10);
  std::normal_distribution<double> g(0, 1);
  std::vector<RunOutcome> five;
  for (int i = 0; i < 5; ++i) five.push_back({i % 2 ? "ddpg" : "usc", g(rng), g(rng)});
  const auto p5 = pareto_export(five);
  REQUIRE(p5.size() == 2);
  CHECK(p5[0].method == "usc");
  CHECK(p5[0].runs == 3);
  const double m = (five[0].reward + five[2].reward + five[4].reward) / 3;
  double var = 0.0;
  for (int i : {0, 2, 4}) var += (five[static_cast<std::size_t>(i)].reward - m) * (five[static_cast<std::size_t>(i)].reward - m) / 3;
  CHECK(p5[0].mean_reward == doctest::Approx(m).epsilon(1e-14));
  CHECK(p5[0].std_reward == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("calibration pairs one score per visited state") {
  const EnvConfig env = short_env();
  AgentConfig agent;
  agent.method = Method::usc;
  agent.hidden = {8};
  agent.batch_size = 8;
  agent.warmup_batches = 2;
  Trainer t(env, agent, 3);
  t.train(2);
  CalibrationConfig cc;
  cc.episodes = 2;
  cc.reference = 16;
  const CalibrationData a = collect_calibration(t.nets(), agent, env, t.buffer(), cc, 5);
  const CalibrationData b = collect_calibration(t.nets(), agent, env, t.buffer(), cc, 5);
  CHECK(a.size() > 0);
  CHECK(a.size() <= 60);
  CHECK(a.error == b.error);
  CHECK(a.uncertainty == b.uncertainty);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.uncertainty[i] >= 0.0);
    CHECK(a.error[i] >= 0.0);
  }
}

TEST_CASE("csv writers use a fixed layout") {
  std::ostringstream os;
  const std::vector<ParetoRow> rows{{"usc", 2, 1.5, 0.5, 0.25, 0.125}};
  write_pareto_csv(os, rows);
  const std::string s = os.str();
  CHECK(s.substr(0, s.find('\n')).find("method") == 0);
  CHECK(s.find("usc,2,1.5,0.5,0.25,0.125") != std::string::npos);

  std::ostringstream tr;
  write_training_csv(tr, std::vector<EpisodeRecord>{});
  const std::string header = tr.str();
  CHECK(std::count(header.begin(), header.end(), '\n') == 1);
}

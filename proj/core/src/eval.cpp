#include "usc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <locale>
#include <numeric>
#include <ostream>
#include <string>

#include "usc/critics.hpp"
#include "usc/errors.hpp"
#include "usc/uncertainty.hpp"

namespace usc {

Eigen::MatrixXd probe_actions() {
  Eigen::MatrixXd a(2, 8);
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      a(0, k) = dx;
      a(1, k) = dy;
      ++k;
    }
  }
  return a;
}

CostMap predict_cost_map(const NetworkParameters& actor, const NetworkParameters& safety_critic,
                         const PointGoalConfig& cfg, const Layout& layout, int resolution,
                         MapAction reduction) {
  CostMap map;
  map.truth = ground_truth_cost_field(cfg, layout, resolution);
  map.predicted = Grid(resolution, cfg.half_width);
  const int cells = resolution * resolution;
  const auto sdim = static_cast<Eigen::Index>(4 + 2 * layout.hazards.size());
  Eigen::MatrixXd states(sdim, cells);
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      states.col(iy * resolution + ix) =
          point_goal_observation(layout, map.predicted.cell_center(ix, iy));
    }
  }
  Eigen::RowVectorXd q;
  if (reduction == MapAction::policy) {
    q = forward_batch(safety_critic, concat_rows(states, forward_batch(actor, states))).row(0);
  } else {
    const Eigen::MatrixXd probes = probe_actions();
    q = Eigen::RowVectorXd::Constant(cells, std::numeric_limits<double>::infinity());
    for (Eigen::Index k = 0; k < probes.cols(); ++k) {
      const Eigen::MatrixXd acts = probes.col(k).replicate(1, cells);
      q = q.cwiseMin(forward_batch(safety_critic, concat_rows(states, acts)).row(0));
    }
  }
  for (int i = 0; i < cells; ++i) {
    if (!std::isfinite(q[i])) throw NumericError("non-finite cost-map prediction", i);
    map.predicted.values[static_cast<std::size_t>(i)] = q[i];
  }
  return map;
}

CostMap predict_cost_map(const NetworkParameters& actor, const NetworkParameters& safety_critic,
                         const EnvConfig& env, std::uint64_t layout_seed, int resolution,
                         MapAction reduction) {
  if (env.family != EnvFamily::point_goal) {
    throw CapabilityError("cost maps are only defined for the point_goal family");
  }
  return predict_cost_map(actor, safety_critic, env.point_goal,
                          sample_layout(env.point_goal, layout_seed), resolution, reduction);
}

std::vector<double> normalize_map(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

namespace {

void require_congruent(const Grid& a, const Grid& b) {
  if (a.resolution != b.resolution || a.size() != b.size()) {
    throw InvalidInputError("cost maps are not congruent (" + std::to_string(a.resolution) +
                            " vs " + std::to_string(b.resolution) + ")");
  }
}

}  // namespace

double gradient_mse(const Grid& pred, const Grid& truth) {
  require_congruent(pred, truth);
  const int g = pred.resolution;
  if (g < 3) throw InvalidInputError("gradient_mse needs a grid of at least 3x3");
  const auto p = normalize_map(pred.values);
  const auto t = normalize_map(truth.values);
  auto at = [g](const std::vector<double>& v, int ix, int iy) {
    return v[static_cast<std::size_t>(iy) * g + ix];
  };
  double total = 0.0;
  for (int iy = 1; iy < g - 1; ++iy) {
    for (int ix = 1; ix < g - 1; ++ix) {
      const double dx = 0.5 * ((at(p, ix + 1, iy) - at(p, ix - 1, iy)) -
                               (at(t, ix + 1, iy) - at(t, ix - 1, iy)));
      const double dy = 0.5 * ((at(p, ix, iy + 1) - at(p, ix, iy - 1)) -
                               (at(t, ix, iy + 1) - at(t, ix, iy - 1)));
      total += dx * dx + dy * dy;
    }
  }
  return total / static_cast<double>((g - 2) * (g - 2));
}

double contrast_error(const Grid& pred, const Grid& truth) {
  require_congruent(pred, truth);
  const auto p = normalize_map(pred.values);
  const auto t = normalize_map(truth.values);
  double ph = 0.0, ps = 0.0, th = 0.0, ts = 0.0;
  std::size_t nh = 0, ns = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth.values[i] > 0.0) {
      ph += p[i];
      th += t[i];
      ++nh;
    } else {
      ps += p[i];
      ts += t[i];
      ++ns;
    }
  }
  if (nh == 0 || ns == 0) {
    throw InvalidInputError("contrast needs both hazard and safe cells in the ground truth");
  }
  const double cp = ph / nh - ps / ns;
  const double ct = th / nh - ts / ns;
  return std::abs(cp - ct);
}

double map_entropy(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double lo = *std::min_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v - lo;
  if (!(total > 0.0)) return std::log(static_cast<double>(values.size()));
  double h = 0.0;
  for (double v : values) {
    const double p = (v - lo) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double entropy_error(const Grid& pred, const Grid& truth) {
  require_congruent(pred, truth);
  return std::abs(map_entropy(pred.values) - map_entropy(truth.values));
}

MapMetrics map_metrics(const CostMap& map) {
  return {gradient_mse(map.predicted, map.truth), contrast_error(map.predicted, map.truth),
          entropy_error(map.predicted, map.truth)};
}

std::vector<std::string> metric_definitions() {
  return {
      "gradient_mse: mean over interior cells of |grad n(pred) - grad n(truth)|^2, n = min-max "
      "normalisation, central differences in cell units",
      "contrast_error: |c(pred) - c(truth)|, c = mean n(map) over hazard cells - mean n(map) over "
      "safe cells",
      "entropy_error: |H(pred) - H(truth)|, H = Shannon entropy (nats) of the min-shifted map "
      "normalised to sum 1",
  };
}

// ---------------------------------------------------------------------------

void CalibrationData::add(double u, double err) {
  if (!(u >= 0.0) || !(err >= 0.0)) {
    throw InvalidInputError("calibration pairs must be nonnegative");
  }
  uncertainty.push_back(u);
  error.push_back(err);
}

namespace {

std::vector<std::size_t> order_by_uncertainty(const CalibrationData& data) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.uncertainty[a] < data.uncertainty[b];
  });
  return order;
}

}  // namespace

std::vector<ReliabilityBin> reliability_curve(const CalibrationData& data, int n_bins) {
  if (n_bins < 1) throw InvalidInputError("reliability curve needs at least one bin");
  if (data.size() < static_cast<std::size_t>(n_bins)) {
    throw StateError("reliability curve needs at least " + std::to_string(n_bins) +
                     " samples, got " + std::to_string(data.size()));
  }
  const auto order = order_by_uncertainty(data);
  const std::size_t n = data.size();
  const std::size_t base = n / static_cast<std::size_t>(n_bins);
  const std::size_t extra = n % static_cast<std::size_t>(n_bins);
  std::vector<ReliabilityBin> bins;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(n_bins); ++b) {
    ReliabilityBin bin;
    bin.count = base + (b < extra ? 1 : 0);
    for (std::size_t k = 0; k < bin.count; ++k, ++pos) {
      bin.mean_uncertainty += data.uncertainty[order[pos]];
      bin.mean_error += data.error[order[pos]];
    }
    bin.mean_uncertainty /= static_cast<double>(bin.count);
    bin.mean_error /= static_cast<double>(bin.count);
    bins.push_back(bin);
  }
  return bins;
}

std::vector<CoveragePoint> risk_coverage(const CalibrationData& data) {
  std::vector<CoveragePoint> out;
  if (data.size() == 0) return out;
  const auto order = order_by_uncertainty(data);
  const std::size_t n = data.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + data.error[order[i]];
  for (int k = 1; k <= 10; ++k) {
    const double q = k / 10.0;
    // k*n/10 in integers avoids floating error in the ceiling.
    std::size_t keep = (static_cast<std::size_t>(k) * n + 9) / 10;
    keep = std::clamp<std::size_t>(keep, 1, n);
    out.push_back({q, prefix[keep] / static_cast<double>(keep)});
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInputError("spearman needs equal-length inputs");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd deployed_action(const AgentNets& nets, const AgentConfig& agent,
                                const Eigen::VectorXd& s, Rng& screen_rng) {
  Eigen::VectorXd a = clip_action(forward(nets.actor, s));
  if (uses_safety_critic(agent.method)) {
    const ScreenConfig sc{agent.safe_tolerance, agent.screen_samples, agent.ou_sigma};
    a = screen_action(s, a, nets.safety_critic, sc, screen_rng).action;
  }
  return a;
}

void check_compatible(const AgentNets& nets, const EnvConfig& env) {
  const CmdpSpec cmdp = env.cmdp();
  if (nets.actor.spec().input_size() != cmdp.state_dim ||
      nets.actor.spec().output_size() != cmdp.action_dim ||
      nets.safety_critic.spec().input_size() != cmdp.state_dim + cmdp.action_dim) {
    throw InvalidInputError("checkpoint networks do not match the environment dimensions");
  }
}

}  // namespace

std::uint64_t deploy_layout_seed(std::uint64_t seed, int episode) {
  return splitmix64(SeedTree(seed).seed_for("env") + static_cast<std::uint64_t>(episode));
}

std::vector<DeployEpisode> deploy(const AgentNets& nets, const AgentConfig& agent,
                                  const EnvConfig& env, int episodes, std::uint64_t seed) {
  if (episodes < 0) throw InvalidInputError("episode count must be >= 0");
  check_compatible(nets, env);
  std::vector<DeployEpisode> out;
  if (episodes == 0) return out;
  auto environment = make_environment(env);
  Rng screen_rng = SeedTree(seed).stream("screening");
  for (int e = 0; e < episodes; ++e) {
    DeployEpisode d;
    d.episode = e;
    d.layout_seed = deploy_layout_seed(seed, e);
    Eigen::VectorXd s = environment->reset(d.layout_seed);
    bool done = false;
    while (!done) {
      const StepResult r = environment->step(deployed_action(nets, agent, s, screen_rng));
      d.reward += r.reward;
      d.cost += r.cost;
      d.success = d.success || r.success;
      ++d.steps;
      s = r.observation;
      done = r.terminal;
    }
    out.push_back(d);
  }
  return out;
}

namespace {

void mean_std(std::span<const double> v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace

DeploySummary summarize(std::span<const DeployEpisode> episodes) {
  DeploySummary s;
  s.episodes = static_cast<int>(episodes.size());
  if (episodes.empty()) return s;
  std::vector<double> r, c;
  int wins = 0;
  for (const auto& e : episodes) {
    r.push_back(e.reward);
    c.push_back(e.cost);
    wins += e.success ? 1 : 0;
  }
  mean_std(r, s.mean_reward, s.std_reward);
  mean_std(c, s.mean_cost, s.std_cost);
  s.success_rate = static_cast<double>(wins) / static_cast<double>(episodes.size());
  return s;
}

CalibrationData collect_calibration(const AgentNets& nets, const AgentConfig& agent,
                                    const EnvConfig& env, const ReplayBuffer& buffer,
                                    const CalibrationConfig& cfg, std::uint64_t seed) {
  if (cfg.episodes < 1) throw InvalidInputError("calibration needs at least one episode");
  if (cfg.reference < 1) throw InvalidInputError("calibration reference must be >= 1");
  if (buffer.size() == 0) throw StateError("calibration needs a nonempty replay buffer");
  check_compatible(nets, env);
  const SeedTree tree(seed);
  Rng ref_rng = tree.stream("calibration");
  const Minibatch ref = buffer.sample_uniform(static_cast<std::size_t>(cfg.reference), ref_rng);
  const InfluenceScope scope =
      agent.influence_scope.value_or(default_influence_scope(nets.safety_critic.spec()));
  const GramInfluence infl(nets.safety_critic, ref.state_actions(), {agent.gn_damping, scope});

  const double gamma = env.gamma;
  auto environment = make_environment(env);
  Rng screen_rng = tree.stream("screening");
  CalibrationData data;
  for (int e = 0; e < cfg.episodes; ++e) {
    Eigen::VectorXd s = environment->reset(deploy_layout_seed(seed, e));
    std::vector<Eigen::VectorXd> inputs;
    std::vector<double> costs;
    bool done = false;
    while (!done) {
      const Eigen::VectorXd a = deployed_action(nets, agent, s, screen_rng);
      Eigen::VectorXd x(s.size() + a.size());
      x << s, a;
      inputs.push_back(x);
      const StepResult r = environment->step(a);
      costs.push_back(r.cost);
      s = r.observation;
      done = r.terminal;
    }
    Eigen::MatrixXd xs(inputs.front().size(), static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t t = 0; t < inputs.size(); ++t) xs.col(static_cast<Eigen::Index>(t)) = inputs[t];
    const Eigen::VectorXd q = forward_batch(nets.safety_critic, xs).row(0).transpose();
    const Eigen::VectorXd u = infl.score(xs);
    const auto g = discounted_cost_to_go(costs, gamma);
    for (std::size_t t = 0; t < g.size(); ++t) {
      const auto i = static_cast<Eigen::Index>(t);
      data.add(u[i], std::abs(q[i] - g[t]));
    }
  }
  return data;
}

// ---------------------------------------------------------------------------

RunOutcome final_window(const std::string& method, std::span<const EpisodeRecord> records,
                        int window) {
  RunOutcome o{method, 0.0, 0.0};
  if (records.empty()) return o;
  const std::size_t w = std::min<std::size_t>(records.size(), static_cast<std::size_t>(window));
  for (std::size_t i = records.size() - w; i < records.size(); ++i) {
    o.reward += records[i].reward;
    o.cost += records[i].cost;
  }
  o.reward /= static_cast<double>(w);
  o.cost /= static_cast<double>(w);
  return o;
}

std::vector<ParetoRow> pareto_export(std::span<const RunOutcome> runs) {
  std::vector<std::string> methods;
  for (const auto& r : runs) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }
  std::vector<ParetoRow> rows;
  for (const auto& m : methods) {
    std::vector<double> rew, cost;
    for (const auto& r : runs) {
      if (r.method != m) continue;
      rew.push_back(r.reward);
      cost.push_back(r.cost);
    }
    ParetoRow row;
    row.method = m;
    row.runs = static_cast<int>(rew.size());
    mean_std(rew, row.mean_reward, row.std_reward);
    mean_std(cost, row.mean_cost, row.std_cost);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

void TheoremConfig::validate() const {
  if (!(lower < upper)) throw InvalidInputError("theorem check needs lower < upper");
  if (!(tau > lower && tau <= upper)) {
    throw InvalidInputError("theorem check needs lower < tau <= upper");
  }
  if (!(p_pi >= 0.0 && p_pi <= p_unif && p_unif <= 1.0)) {
    throw InvalidInputError("theorem check needs 0 <= p_pi <= p_unif <= 1");
  }
  if (m < 1) throw InvalidInputError("theorem check needs m >= 1");
  if (!(temperature > 0.0)) throw InvalidInputError("theorem check needs temperature > 0");
  if (draws < 2) throw InvalidInputError("theorem check needs at least 2 draws");
}

double expected_max(double lower, double upper, double p, int m) {
  return lower + (upper - lower) * (1.0 - std::pow(1.0 - p, m));
}

namespace {

struct Moments {
  double mean_max = 0.0;
  double var_max = 0.0;
  double mean_lse = 0.0;
  double var_lse = 0.0;
};

// Max and temperature-c LSE of m two-valued critic draws, averaged over draws.
Moments sample_sampler(const TheoremConfig& cfg, double p, Rng& rng) {
  std::bernoulli_distribution risky(p);
  const double n = static_cast<double>(cfg.draws);
  double s1 = 0.0, s2 = 0.0, l1 = 0.0, l2 = 0.0;
  for (long d = 0; d < cfg.draws; ++d) {
    int hits = 0;
    for (int i = 0; i < cfg.m; ++i) hits += risky(rng) ? 1 : 0;
    const double mx = hits > 0 ? cfg.upper : cfg.lower;
    // c log(k e^{U/c} + (m-k) e^{L/c}), shifted by the max.
    const double c = cfg.temperature;
    const double lse =
        mx + c * std::log(hits * std::exp((cfg.upper - mx) / c) +
                          (cfg.m - hits) * std::exp((cfg.lower - mx) / c));
    s1 += mx;
    s2 += mx * mx;
    l1 += lse;
    l2 += lse * lse;
  }
  Moments mo;
  mo.mean_max = s1 / n;
  mo.var_max = std::max(0.0, (s2 / n - mo.mean_max * mo.mean_max) * n / (n - 1.0));
  mo.mean_lse = l1 / n;
  mo.var_lse = std::max(0.0, (l2 / n - mo.mean_lse * mo.mean_lse) * n / (n - 1.0));
  return mo;
}

}  // namespace

TheoremResult theorem1_check(const TheoremConfig& cfg, Rng& rng) {
  cfg.validate();
  TheoremResult r;
  r.low_draws = cfg.draws < kTheoremMinDraws;
  const Moments unif = sample_sampler(cfg, cfg.p_unif, rng);
  const Moments pol = sample_sampler(cfg, cfg.p_pi, rng);
  const double n = static_cast<double>(cfg.draws);
  r.mean_max_unif = unif.mean_max;
  r.mean_max_pi = pol.mean_max;
  r.gap = unif.mean_max - pol.mean_max;
  r.gap_se = std::sqrt((unif.var_max + pol.var_max) / n);
  r.closed_form_gap = expected_max(cfg.lower, cfg.upper, cfg.p_unif, cfg.m) -
                      expected_max(cfg.lower, cfg.upper, cfg.p_pi, cfg.m);
  r.bound = (cfg.tau - cfg.lower) *
            (std::pow(1.0 - cfg.p_pi, cfg.m) - std::pow(1.0 - cfg.p_unif, cfg.m));
  r.lse_gap = unif.mean_lse - pol.mean_lse;
  r.lse_gap_se = std::sqrt((unif.var_lse + pol.var_lse) / n);
  r.lse_bound = r.bound - cfg.temperature * std::log(static_cast<double>(cfg.m));
  r.pass = r.gap + 3.0 * r.gap_se >= r.bound;
  r.lse_pass = r.lse_gap + 3.0 * r.lse_gap_se >= r.lse_bound;
  return r;
}

// ---------------------------------------------------------------------------

void csv_format(std::ostream& os) {
  os.imbue(std::locale::classic());
  os.precision(17);
}

void write_costmap_csv(std::ostream& os, const CostMap& map) {
  csv_format(os);
  os << "ix,iy,x,y,predicted,truth\n";
  const int g = map.predicted.resolution;
  for (int iy = 0; iy < g; ++iy) {
    for (int ix = 0; ix < g; ++ix) {
      const Eigen::Vector2d c = map.predicted.cell_center(ix, iy);
      os << ix << ',' << iy << ',' << c.x() << ',' << c.y() << ',' << map.predicted.at(ix, iy)
         << ',' << map.truth.at(ix, iy) << '\n';
    }
  }
}

void write_metrics_csv(std::ostream& os, const MapMetrics& m) {
  csv_format(os);
  for (const auto& line : metric_definitions()) os << "# " << line << '\n';
  os << "gradient_mse,contrast_error,entropy_error\n";
  os << m.gradient_mse << ',' << m.contrast_error << ',' << m.entropy_error << '\n';
}

void write_reliability_csv(std::ostream& os, std::span<const ReliabilityBin> bins) {
  csv_format(os);
  os << "bin,mean_uncertainty,mean_error,count\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    os << b << ',' << bins[b].mean_uncertainty << ',' << bins[b].mean_error << ','
       << bins[b].count << '\n';
  }
}

void write_risk_coverage_csv(std::ostream& os, std::span<const CoveragePoint> points) {
  csv_format(os);
  os << "coverage,mean_error\n";
  for (const auto& p : points) os << p.coverage << ',' << p.mean_error << '\n';
}

void write_pareto_csv(std::ostream& os, std::span<const ParetoRow> rows) {
  csv_format(os);
  os << "method,runs,mean_reward,std_reward,mean_cost,std_cost\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.runs << ',' << r.mean_reward << ',' << r.std_reward << ','
       << r.mean_cost << ',' << r.std_cost << '\n';
  }
}

void write_theorem1_csv(std::ostream& os, const TheoremConfig& cfg, const TheoremResult& r) {
  csv_format(os);
  os << "p_pi,p_unif,m,tau,lower,upper,temperature,draws,mean_max_unif,mean_max_pi,gap,gap_se,"
        "closed_form_gap,bound,pass,lse_gap,lse_gap_se,lse_bound,lse_pass,low_draws\n";
  os << cfg.p_pi << ',' << cfg.p_unif << ',' << cfg.m << ',' << cfg.tau << ',' << cfg.lower << ','
     << cfg.upper << ',' << cfg.temperature << ',' << cfg.draws << ',' << r.mean_max_unif << ','
     << r.mean_max_pi << ',' << r.gap << ',' << r.gap_se << ',' << r.closed_form_gap << ','
     << r.bound << ',' << (r.pass ? 1 : 0) << ',' << r.lse_gap << ',' << r.lse_gap_se << ','
     << r.lse_bound << ',' << (r.lse_pass ? 1 : 0) << ',' << (r.low_draws ? 1 : 0) << '\n';
}

void write_deploy_csv(std::ostream& os, std::span<const DeployEpisode> episodes) {
  csv_format(os);
  os << "episode,layout_seed,steps,reward,cost,success\n";
  for (const auto& e : episodes) {
    os << e.episode << ',' << e.layout_seed << ',' << e.steps << ',' << e.reward << ',' << e.cost
       << ',' << (e.success ? 1 : 0) << '\n';
  }
}

void write_training_header(std::ostream& os) {
  os << "episode,layout_seed,steps,reward,cost,success,lambda,updates,screen_triggers,"
        "loss_safety,loss_bellman,loss_conservative,loss_reward,loss_actor,mean_u,mean_weight,"
        "refine_loss,trust_hits\n";
}

void write_training_row(std::ostream& os, const EpisodeRecord& r) {
  csv_format(os);
  os << r.episode << ',' << r.layout_seed << ',' << r.steps << ',' << r.reward << ',' << r.cost
     << ',' << (r.success ? 1 : 0) << ',' << r.lambda << ',' << r.updates << ','
     << r.screen_triggers << ',' << r.loss_safety << ',' << r.loss_bellman << ','
     << r.loss_conservative << ',' << r.loss_reward << ',' << r.loss_actor << ',' << r.mean_u
     << ',' << r.mean_weight << ',' << r.refine_loss << ',' << r.trust_hits << '\n';
}

void write_training_csv(std::ostream& os, std::span<const EpisodeRecord> records) {
  csv_format(os);
  write_training_header(os);
  for (const auto& r : records) write_training_row(os, r);
}

}  // namespace usc

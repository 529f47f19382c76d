#include "usc/run.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "usc/checkpoint.hpp"
#include "usc/errors.hpp"
#include "usc/rng.hpp"

#ifndef USC_VERSION
#define USC_VERSION "0.0.0"
#endif

namespace usc {

namespace fs = std::filesystem;
using nlohmann::json;

const char* version() { return USC_VERSION; }

fs::path output_root(const RunConfig& cfg) {
  if (const char* env = std::getenv("USC_OUT"); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

json to_json(const AgentNets& n) {
  return {{"actor", to_json(n.actor)},
          {"actor_target", to_json(n.actor_target)},
          {"reward_critic", to_json(n.reward_critic)},
          {"reward_target", to_json(n.reward_target)},
          {"safety_critic", to_json(n.safety_critic)},
          {"safety_target", to_json(n.safety_target)},
          {"actor_opt", to_json(n.actor_opt)},
          {"reward_opt", to_json(n.reward_opt)},
          {"safety_opt", to_json(n.safety_opt)}};
}

AgentNets agent_nets_from_json(const json& j) {
  AgentNets n;
  n.actor = parameters_from_json(j.at("actor"));
  n.actor_target = parameters_from_json(j.at("actor_target"));
  n.reward_critic = parameters_from_json(j.at("reward_critic"));
  n.reward_target = parameters_from_json(j.at("reward_target"));
  n.safety_critic = parameters_from_json(j.at("safety_critic"));
  n.safety_target = parameters_from_json(j.at("safety_target"));
  n.actor_opt = adam_from_json(j.at("actor_opt"));
  n.reward_opt = adam_from_json(j.at("reward_opt"));
  n.safety_opt = adam_from_json(j.at("safety_opt"));
  return n;
}

json to_json(const Checkpoint& c) {
  return {{"format_version", kCheckpointFormatVersion},
          {"software_version", version()},
          {"config", to_json(c.config)},
          {"seed", c.seed},
          {"episodes", c.episodes},
          {"lambda", c.lambda},
          {"nets", to_json(c.nets)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    const int fmt = j.at("format_version").get<int>();
    if (fmt != kCheckpointFormatVersion) {
      throw InvalidInputError("checkpoint format version " + std::to_string(fmt) +
                              " is not supported (expected " +
                              std::to_string(kCheckpointFormatVersion) + ")");
    }
    Checkpoint c;
    c.config = config_from_json(j.at("config"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.episodes = j.at("episodes").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.nets = agent_nets_from_json(j.at("nets"));
    return c;
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("malformed checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw InvalidInputError("checkpoint not found: " + path.string());
  return checkpoint_from_json(read_json_file(path));
}

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StateError("cannot write " + path.string());
  csv_format(os);
  return os;
}

template <class Fn>
void write_csv(const fs::path& path, Fn&& fn) {
  auto os = open_csv(path);
  fn(os);
  if (!os) throw StateError("write failed: " + path.string());
}

void write_steps_header(std::ostream& os) {
  os << "episode,step,loss_safety,loss_bellman,loss_conservative,loss_reward,loss_actor,"
        "mean_u,max_u,mean_weight,refine_loss,trust_hits\n";
}

void write_steps_row(std::ostream& os, const UpdateRecord& r) {
  os << r.episode << ',' << r.step << ',' << r.loss_safety << ',' << r.loss_bellman << ','
     << r.loss_conservative << ',' << r.loss_reward << ',' << r.loss_actor << ',' << r.mean_u
     << ',' << r.max_u << ',' << r.mean_weight << ',' << r.refine_loss << ',' << r.trust_hits
     << '\n';
}

Checkpoint snapshot(const RunConfig& cfg, std::uint64_t seed, const Trainer& t) {
  return {cfg, seed, t.episodes_done(), t.dual().lambda, t.nets()};
}

std::vector<std::string> planned_files(const RunConfig& cfg) {
  std::vector<std::string> files{"manifest.json", "training.csv", "timing.json"};
  if (cfg.step_log) files.push_back("steps.csv");
  if (cfg.checkpoint_every > 0) {
    for (int e = cfg.checkpoint_every; e < cfg.max_episodes; e += cfg.checkpoint_every) {
      files.push_back("checkpoints/episode-" + std::to_string(e) + ".json");
    }
  }
  files.push_back("checkpoint.json");
  const bool safety = uses_safety_critic(cfg.agent.method);
  const bool point_goal = cfg.environment.family == EnvFamily::point_goal;
  if (safety && point_goal) {
    files.push_back("costmap.csv");
    files.push_back("metrics.csv");
  }
  if (safety && cfg.max_episodes > 0 && cfg.evaluation.calibration_episodes > 0) {
    files.push_back("reliability.csv");
    files.push_back("risk_coverage.csv");
  }
  files.insert(files.end(), {"pareto.csv", "theorem1.csv", "deploy.csv"});
  return files;
}

}  // namespace

RunReport cmd_train(const RunConfig& cfg, std::uint64_t seed, const fs::path& root) {
  cfg.validate();
  RunReport report;
  report.directory = root / run_directory_name(cfg, seed);
  fs::create_directories(report.directory);
  const fs::path& dir = report.directory;

  write_json_file(dir / "manifest.json",
                  {{"config", to_json(cfg)},
                   {"config_hash", config_hash(cfg)},
                   {"seed", seed},
                   {"software_version", version()},
                   {"started_at", utc_timestamp()},
                   {"files", planned_files(cfg)}});

  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(cfg.environment, cfg.agent, seed);

  std::ofstream steps;
  if (cfg.step_log) {
    steps = open_csv(dir / "steps.csv");
    write_steps_header(steps);
    trainer.set_update_log([&steps](const UpdateRecord& r) { write_steps_row(steps, r); });
  }

  {
    auto training = open_csv(dir / "training.csv");
    write_training_header(training);
    if (cfg.checkpoint_every > 0) fs::create_directories(dir / "checkpoints");
    for (int e = 0; e < cfg.max_episodes; ++e) {
      try {
        report.episodes.push_back(trainer.run_episode());
      } catch (const NumericError& err) {
        json diag = to_json(snapshot(cfg, seed, trainer));
        diag["error"] = {{"message", err.what()}, {"index", err.index()}, {"episode", e}};
        write_json_file(dir / "diagnostic.json", diag);
        throw NumericError("episode " + std::to_string(e) + ": " + err.what() +
                               " (snapshot in " + (dir / "diagnostic.json").string() + ")",
                           err.index());
      }
      write_training_row(training, report.episodes.back());
      training.flush();
      const int done = e + 1;
      if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 &&
          done < cfg.max_episodes) {
        write_json_file(dir / "checkpoints" / ("episode-" + std::to_string(done) + ".json"),
                        to_json(snapshot(cfg, seed, trainer)));
      }
    }
    if (!training) throw StateError("write failed: training.csv");
  }
  if (steps.is_open()) steps.close();
  write_json_file(dir / "checkpoint.json", to_json(snapshot(cfg, seed, trainer)));
  const double train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto& ev = cfg.evaluation;
  const AgentNets& nets = trainer.nets();
  const bool safety = uses_safety_critic(cfg.agent.method);

  if (safety && cfg.environment.family == EnvFamily::point_goal) {
    const CostMap map = predict_cost_map(nets.actor, nets.safety_critic, cfg.environment,
                                         ev.map_layout_seed, ev.map_resolution, ev.map_action);
    report.metrics = map_metrics(map);
    write_csv(dir / "costmap.csv", [&](std::ostream& os) { write_costmap_csv(os, map); });
    write_csv(dir / "metrics.csv",
              [&](std::ostream& os) { write_metrics_csv(os, *report.metrics); });
  }

  if (safety && cfg.max_episodes > 0 && ev.calibration_episodes > 0) {
    const CalibrationData data =
        collect_calibration(nets, cfg.agent, cfg.environment, trainer.buffer(),
                            {ev.calibration_episodes, ev.calibration_reference}, seed);
    report.reliability = reliability_curve(data, ev.reliability_bins);
    report.coverage = risk_coverage(data);
    write_csv(dir / "reliability.csv",
              [&](std::ostream& os) { write_reliability_csv(os, report.reliability); });
    write_csv(dir / "risk_coverage.csv",
              [&](std::ostream& os) { write_risk_coverage_csv(os, report.coverage); });
  }

  {
    const RunOutcome outcome =
        final_window(std::string(to_string(cfg.agent.method)), report.episodes);
    std::vector<ParetoRow> rows;
    if (!report.episodes.empty()) rows = pareto_export(std::span<const RunOutcome>(&outcome, 1));
    write_csv(dir / "pareto.csv", [&](std::ostream& os) { write_pareto_csv(os, rows); });
  }

  {
    Rng rng = SeedTree(seed).stream("theorem");
    report.theorem = theorem1_check(ev.theorem, rng);
    write_csv(dir / "theorem1.csv",
              [&](std::ostream& os) { write_theorem1_csv(os, ev.theorem, report.theorem); });
  }

  {
    const auto episodes = deploy(nets, cfg.agent, cfg.environment, ev.deploy_episodes, seed);
    report.deploy = summarize(episodes);
    write_csv(dir / "deploy.csv", [&](std::ostream& os) { write_deploy_csv(os, episodes); });
  }

  const double total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json per_episode = json::array();
  for (const auto& r : report.episodes) per_episode.push_back(r.wall_seconds);
  write_json_file(dir / "timing.json", {{"train_seconds", train_seconds},
                                        {"total_seconds", total_seconds},
                                        {"episode_seconds", per_episode},
                                        {"finished_at", utc_timestamp()}});
  return report;
}

DeployReport cmd_deploy(const fs::path& checkpoint, int episodes, std::uint64_t seed,
                        const fs::path& root) {
  if (episodes < 0) throw InvalidInputError("--episodes must be >= 0");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  DeployReport report;
  report.directory = root / run_directory_name(ckpt.config, ckpt.seed) /
                     ("deploy-seed" + std::to_string(seed));
  report.episodes = deploy(ckpt.nets, ckpt.config.agent, ckpt.config.environment, episodes, seed);
  report.summary = summarize(report.episodes);
  fs::create_directories(report.directory);
  write_csv(report.directory / "deploy.csv",
            [&](std::ostream& os) { write_deploy_csv(os, report.episodes); });
  return report;
}

CostmapReport cmd_costmap(const fs::path& checkpoint, int resolution, const fs::path& root) {
  if (resolution < 1) throw InvalidInputError("--resolution must be >= 1");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (!uses_safety_critic(ckpt.config.agent.method)) {
    throw CapabilityError("method '" + std::string(to_string(ckpt.config.agent.method)) +
                          "' has no safety critic to map");
  }
  const auto& ev = ckpt.config.evaluation;
  CostmapReport report;
  report.map = predict_cost_map(ckpt.nets.actor, ckpt.nets.safety_critic, ckpt.config.environment,
                                ev.map_layout_seed, resolution, ev.map_action);
  report.metrics = map_metrics(report.map);
  report.directory = root / run_directory_name(ckpt.config, ckpt.seed) /
                     ("costmap-G" + std::to_string(resolution));
  fs::create_directories(report.directory);
  write_csv(report.directory / "costmap.csv",
            [&](std::ostream& os) { write_costmap_csv(os, report.map); });
  write_csv(report.directory / "metrics.csv",
            [&](std::ostream& os) { write_metrics_csv(os, report.metrics); });
  return report;
}

TheoremReport cmd_theorem1(const TheoremConfig& cfg, std::uint64_t seed, const fs::path& root) {
  cfg.validate();
  const json params = {{"p_pi", cfg.p_pi},   {"p_unif", cfg.p_unif}, {"m", cfg.m},
                       {"tau", cfg.tau},     {"lower", cfg.lower},   {"upper", cfg.upper},
                       {"temperature", cfg.temperature},             {"draws", cfg.draws},
                       {"seed", seed}};
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(params.dump())));
  TheoremReport report;
  report.directory = root / ("theorem1-" + std::string(hash, 8));
  Rng rng = SeedTree(seed).stream("theorem");
  report.result = theorem1_check(cfg, rng);
  fs::create_directories(report.directory);
  write_csv(report.directory / "theorem1.csv",
            [&](std::ostream& os) { write_theorem1_csv(os, cfg, report.result); });
  return report;
}

std::vector<std::uint64_t> sweep_seeds(const RunConfig& cfg, int n_seeds) {
  if (n_seeds < 1) throw InvalidInputError("--seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) {
    const auto k = static_cast<std::size_t>(i);
    seeds.push_back(k < cfg.seeds.size() ? cfg.seeds[k] : seeds.back() + 1);
  }
  return seeds;
}

SweepReport cmd_sweep(const RunConfig& cfg, int n_seeds, const fs::path& root, int workers) {
  cfg.validate();
  const auto seeds = sweep_seeds(cfg, n_seeds);
  std::vector<RunReport> reports(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        reports[i] = cmd_train(cfg, seeds[i], root);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(seeds.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  SweepReport sweep;
  std::vector<RunOutcome> outcomes;
  const std::string method(to_string(cfg.agent.method));
  for (const auto& r : reports) {
    sweep.runs.push_back(r.directory);
    if (!r.episodes.empty()) outcomes.push_back(final_window(method, r.episodes));
  }
  sweep.pareto = pareto_export(outcomes);
  sweep.directory = root / ("sweep-" + method + "-" + config_hash(cfg).substr(0, 8));
  fs::create_directories(sweep.directory);
  write_csv(sweep.directory / "pareto.csv",
            [&](std::ostream& os) { write_pareto_csv(os, sweep.pareto); });
  return sweep;
}

}  // namespace usc

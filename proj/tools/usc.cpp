// usc: train, deploy and evaluate constrained DDPG agents.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "usc/config.hpp"
#include "usc/errors.hpp"
#include "usc/run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return kind == "usage" ? 64 : (kind == "config" || kind == "invalid_input" ? 2 : 1);
}

json summary_json(const usc::DeploySummary& s) {
  return {{"episodes", s.episodes},       {"mean_reward", s.mean_reward},
          {"std_reward", s.std_reward},   {"mean_cost", s.mean_cost},
          {"std_cost", s.std_cost},       {"success_rate", s.success_rate}};
}

json metrics_json(const usc::MapMetrics& m) {
  return {{"gradient_mse", m.gradient_mse},
          {"contrast_error", m.contrast_error},
          {"entropy_error", m.entropy_error}};
}

json theorem_json(const usc::TheoremResult& r) {
  return {{"gap", r.gap},
          {"gap_se", r.gap_se},
          {"closed_form_gap", r.closed_form_gap},
          {"bound", r.bound},
          {"pass", r.pass},
          {"lse_gap", r.lse_gap},
          {"lse_bound", r.lse_bound},
          {"lse_pass", r.lse_pass},
          {"low_draws", r.low_draws}};
}

fs::path root_for_checkpoint(const fs::path& ckpt) {
  return usc::output_root(usc::load_checkpoint(ckpt).config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained DDPG with uncertainty-aware safety critics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(usc::version()));

  std::string config_path;
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train", "Train one seed and write its report bundle");
  train->add_option("--config", config_path, "JSON configuration file")->required();
  train->add_option("--seed", seed, "master seed")->required();

  std::string checkpoint;
  int episodes = 0;
  auto* deploy = app.add_subcommand("deploy", "Noise-free rollouts of a checkpoint");
  deploy->add_option("--checkpoint", checkpoint)->required();
  deploy->add_option("--episodes", episodes)->required();
  deploy->add_option("--seed", seed)->required();

  int resolution = 32;
  auto* costmap = app.add_subcommand("costmap", "Predicted cost map of a checkpoint");
  costmap->add_option("--checkpoint", checkpoint)->required();
  costmap->add_option("--resolution", resolution)->required();

  usc::TheoremConfig tc;
  auto* theorem = app.add_subcommand("theorem1", "Monte-Carlo check of the conservatism bound");
  theorem->add_option("--p-pi", tc.p_pi)->capture_default_str();
  theorem->add_option("--p-unif", tc.p_unif)->capture_default_str();
  theorem->add_option("--m", tc.m)->capture_default_str();
  theorem->add_option("--tau", tc.tau)->capture_default_str();
  theorem->add_option("--lower", tc.lower)->capture_default_str();
  theorem->add_option("--upper", tc.upper)->capture_default_str();
  theorem->add_option("--draws", tc.draws)->capture_default_str();
  theorem->add_option("--temperature", tc.temperature)->capture_default_str();
  theorem->add_option("--seed", seed)->capture_default_str();

  int n_seeds = 0;
  int workers = 0;
  auto* sweep = app.add_subcommand("sweep", "Train several seeds and aggregate them");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--seeds", n_seeds, "number of seeds")->required();
  sweep->add_option("--workers", workers, "parallel runs (0: one per core)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    json out;
    if (*train) {
      const auto cfg = usc::load_config(config_path);
      const auto r = usc::cmd_train(cfg, seed, usc::output_root(cfg));
      out = {{"run_directory", r.directory.string()}, {"episodes", r.episodes.size()}};
      if (r.metrics) out["metrics"] = metrics_json(*r.metrics);
      if (r.deploy) out["deploy"] = summary_json(*r.deploy);
    } else if (*deploy) {
      const auto r = usc::cmd_deploy(checkpoint, episodes, seed, root_for_checkpoint(checkpoint));
      out = {{"directory", r.directory.string()}, {"summary", summary_json(r.summary)}};
    } else if (*costmap) {
      const auto r = usc::cmd_costmap(checkpoint, resolution, root_for_checkpoint(checkpoint));
      out = {{"directory", r.directory.string()}, {"metrics", metrics_json(r.metrics)}};
    } else if (*theorem) {
      usc::RunConfig defaults;
      const auto r = usc::cmd_theorem1(tc, seed, usc::output_root(defaults));
      if (r.result.low_draws) {
        std::cerr << json{{"warning", "fewer than " + std::to_string(usc::kTheoremMinDraws) +
                                          " draws; estimates are imprecise"}}
                         .dump()
                  << '\n';
      }
      out = {{"directory", r.directory.string()}, {"result", theorem_json(r.result)}};
    } else if (*sweep) {
      const auto cfg = usc::load_config(config_path);
      const auto r = usc::cmd_sweep(cfg, n_seeds, usc::output_root(cfg), workers);
      json runs = json::array();
      for (const auto& p : r.runs) runs.push_back(p.string());
      out = {{"directory", r.directory.string()}, {"runs", runs}};
    }
    std::cout << out.dump(2) << '\n';
    return 0;
  } catch (const usc::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}

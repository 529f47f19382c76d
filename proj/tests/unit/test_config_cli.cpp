#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "usc/config.hpp"
#include "usc/errors.hpp"
#include "usc/run.hpp"

using namespace usc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("usc-unit-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny(const std::string& kind, int episodes) {
  return parse_config(R"({
    "environment": {"horizon": 15},
    "agent": {"kind": ")" + kind + R"(", "hidden": [8], "batch_size": 8, "warmup_batches": 2,
              "max_episodes": )" + std::to_string(episodes) + R"(, "checkpoint_every": 1},
    "evaluation": {"deploy_episodes": 2, "calibration_episodes": 1, "calibration_reference": 8,
                   "reliability_bins": 2, "map_resolution": 8,
                   "theorem1": {"draws": 2000}}
  })");
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty configuration yields the documented defaults") {
  const RunConfig c = parse_config("  \n");
  CHECK(c.agent.actor_lr == 2e-3);
  CHECK(c.agent.critic_lr == 1e-3);
  CHECK(c.agent.buffer_capacity == 200000);
  CHECK(c.agent.batch_size == 64);
  CHECK(c.environment.gamma == 0.95);
  CHECK(c.agent.tau == 5e-3);
  CHECK(c.agent.ou_sigma == 0.2);
  CHECK(c.agent.gn_damping == 1e-6);
  CHECK(c.agent.safe_tolerance == 0.3);
  CHECK(c.agent.method == Method::usc);
  CHECK(c.seeds.size() == 5);
}

TEST_CASE("configuration errors name the problem") {
  const std::string gamma = config_error(R"({"environment": {"gamma": 1.2}})");
  CHECK(gamma.find("gamma") != std::string::npos);
  CHECK(gamma.find("[0, 1)") != std::string::npos);
  CHECK(config_error(R"({"agent": {"foo": 1}})").find("unknown key 'agent.foo'") != std::string::npos);
  CHECK(config_error(R"({"bar": 1})").find("bar") != std::string::npos);
  const std::string parse = config_error("{\n  \"agent\": {\n    \"kind\": ,\n  }\n}");
  CHECK(parse.find("line 3") != std::string::npos);
  CHECK(parse.find("column") != std::string::npos);
  CHECK(config_error(R"({"agent": {"kind": "ppo"}})").find("agent.kind") != std::string::npos);
  CHECK(config_error(R"({"agent": {"batch_size": "big"}})") != "");
  CHECK(config_error(R"({"agent": {"batch_size": 4, "warmup_batches": 2}})").find("warmup_batches") !=
        std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/usc.json"), ConfigError);
}

TEST_CASE("resolved documents round-trip") {
  const RunConfig a = tiny("csc", 3);
  const RunConfig b = config_from_json(to_json(a));
  CHECK(to_json(a) == to_json(b));
  CHECK(config_hash(a) == config_hash(b));
}

TEST_CASE("config hash tracks fields but not seeds or output location") {
  RunConfig a;
  RunConfig b = a;
  b.seeds = {7};
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.agent.top_n = 5;
  CHECK(config_hash(a) != config_hash(b));
  RunConfig c = a;
  c.environment.gamma = 0.9;
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
  const std::string name = run_directory_name(a, 3);
  CHECK(name == "usc-" + config_hash(a).substr(0, 8) + "-seed3");
}

TEST_CASE("output root honours USC_OUT") {
  RunConfig c;
  c.output_dir = "cfg-root";
  ::unsetenv("USC_OUT");
  CHECK(output_root(c) == fs::path("cfg-root"));
  ::setenv("USC_OUT", "/tmp/env-root", 1);
  CHECK(output_root(c) == fs::path("/tmp/env-root"));
  ::setenv("USC_OUT", "", 1);
  CHECK(output_root(c) == fs::path("cfg-root"));
  ::unsetenv("USC_OUT");
}

TEST_CASE("zero-episode training writes a manifest and an empty log") {
  const fs::path root = scratch("zero");
  const RunReport r = cmd_train(tiny("usc", 0), 0, root);
  CHECK(r.episodes.empty());
  CHECK(fs::exists(r.directory / "manifest.json"));
  const std::string csv = slurp(r.directory / "training.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1);
  const auto manifest = nlohmann::json::parse(slurp(r.directory / "manifest.json"));
  CHECK(manifest["seed"] == 0);
  CHECK(manifest["config_hash"] == config_hash(tiny("usc", 0)));
  fs::remove_all(root);
}

TEST_CASE("training writes the report bundle and reruns are byte-identical") {
  const fs::path a = scratch("rerun-a");
  const fs::path b = scratch("rerun-b");
  const RunConfig cfg = tiny("usc", 3);
  const RunReport ra = cmd_train(cfg, 4, a);
  const RunReport rb = cmd_train(cfg, 4, b);
  for (const char* f : {"training.csv", "costmap.csv", "metrics.csv", "reliability.csv",
                        "risk_coverage.csv", "pareto.csv", "theorem1.csv", "deploy.csv",
                        "checkpoint.json"}) {
    INFO(f);
    REQUIRE(fs::exists(ra.directory / f));
    CHECK(slurp(ra.directory / f) == slurp(rb.directory / f));
  }
  CHECK(fs::exists(ra.directory / "timing.json"));
  CHECK(fs::exists(ra.directory / "checkpoints" / "episode-1.json"));
  CHECK(ra.metrics.has_value());
  CHECK(ra.reliability.size() == 2);

  const Checkpoint ck = load_checkpoint(ra.directory / "checkpoint.json");
  CHECK(ck.seed == 4);
  CHECK(ck.episodes == 3);
  const Checkpoint back = checkpoint_from_json(to_json(ck));
  CHECK(back.nets.actor.flat() == ck.nets.actor.flat());
  CHECK(back.nets.safety_critic.flat() == ck.nets.safety_critic.flat());
  CHECK(back.nets.safety_opt.m == ck.nets.safety_opt.m);
  CHECK(back.lambda == ck.lambda);

  const DeployReport d1 = cmd_deploy(ra.directory / "checkpoint.json", 3, 9, a);
  const DeployReport d2 = cmd_deploy(ra.directory / "checkpoint.json", 3, 9, b);
  CHECK(d1.summary.mean_reward == d2.summary.mean_reward);
  CHECK(fs::exists(d1.directory / "deploy.csv"));

  const CostmapReport cm = cmd_costmap(ra.directory / "checkpoint.json", 5, a);
  CHECK(cm.map.predicted.size() == 25);
  CHECK(fs::exists(cm.directory / "costmap.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("DDPG checkpoints have no cost map") {
  const fs::path root = scratch("ddpg");
  const RunReport r = cmd_train(tiny("ddpg", 1), 0, root);
  CHECK_FALSE(r.metrics.has_value());
  CHECK_FALSE(fs::exists(r.directory / "costmap.csv"));
  CHECK_THROWS_AS(cmd_costmap(r.directory / "checkpoint.json", 8, root), CapabilityError);
  fs::remove_all(root);
}

TEST_CASE("malformed checkpoints are rejected") {
  CHECK_THROWS_AS(checkpoint_from_json(nlohmann::json{{"format", 99}}), InvalidInputError);
  CHECK_THROWS_AS(checkpoint_from_json(nlohmann::json::array()), InvalidInputError);
}

TEST_CASE("theorem command") {
  const fs::path root = scratch("theorem");
  TheoremConfig tc;
  const TheoremReport r = cmd_theorem1(tc, 0, root);
  CHECK(r.result.pass);
  CHECK(r.result.bound == doctest::Approx(0.3477).epsilon(1e-4));
  CHECK(fs::exists(r.directory / "theorem1.csv"));
  const TheoremReport again = cmd_theorem1(tc, 0, root);
  CHECK(again.result.gap == r.result.gap);
  fs::remove_all(root);
}

TEST_CASE("sweep over five seeds") {
  const fs::path root = scratch("sweep");
  RunConfig cfg = tiny("csc", 2);
  cfg.seeds = {10, 11};
  CHECK(sweep_seeds(cfg, 5) == std::vector<std::uint64_t>{10, 11, 12, 13, 14});
  CHECK(sweep_seeds(cfg, 1) == std::vector<std::uint64_t>{10});
  const SweepReport r = cmd_sweep(cfg, 5, root, 2);
  REQUIRE(r.runs.size() == 5);
  for (const auto& p : r.runs) CHECK(fs::exists(p / "training.csv"));
  CHECK(fs::exists(r.directory / "pareto.csv"));
  REQUIRE(r.pareto.size() == 1);
  CHECK(r.pareto[0].runs == 5);
  fs::remove_all(root);
}

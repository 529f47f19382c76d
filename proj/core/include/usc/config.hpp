#pragma once

// Run configuration: one JSON document with environment, agent and evaluation
// sections. Every field has a default; unknown keys are rejected.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "usc/agent.hpp"
#include "usc/envs.hpp"
#include "usc/eval.hpp"

namespace usc {

struct EvaluationConfig {
  int deploy_episodes = 20;
  int calibration_episodes = 10;
  int calibration_reference = 256;
  int reliability_bins = 10;
  int map_resolution = 32;
  MapAction map_action = MapAction::policy;
  std::uint64_t map_layout_seed = 20240601;
  TheoremConfig theorem;

  void validate() const;
};

struct RunConfig {
  EnvConfig environment;
  AgentConfig agent;
  int max_episodes = 300;
  int checkpoint_every = 50;  // 0 disables periodic checkpoints
  bool step_log = false;
  EvaluationConfig evaluation;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string output_dir = "runs";

  void validate() const;
};

/// Parses a configuration document; an empty or whitespace-only text yields
/// all defaults. Throws ConfigError naming the line/column or the field.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved document, including every defaulted field.
nlohmann::json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const EnvConfig& env);
EnvConfig env_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AgentConfig& agent);
AgentConfig agent_config_from_json(const nlohmann::json& j);

/// FNV-1a over the resolved document without `seeds` and `output_dir`,
/// as 16 lowercase hex digits.
std::string config_hash(const RunConfig& cfg);

/// <method>-<first 8 hash digits>-seed<seed>
std::string run_directory_name(const RunConfig& cfg, std::uint64_t seed);

}  // namespace usc

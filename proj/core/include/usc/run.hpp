#pragma once

// Run orchestration behind the command-line tool: run directories, manifests,
// checkpoints and the per-run report bundle.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "usc/agent.hpp"
#include "usc/config.hpp"
#include "usc/eval.hpp"

namespace usc {

/// Library version string baked in at build time.
const char* version();

/// `USC_OUT` when set and non-empty, else the configured output_dir.
std::filesystem::path output_root(const RunConfig& cfg);

nlohmann::json to_json(const AgentNets& nets);
AgentNets agent_nets_from_json(const nlohmann::json& j);

struct Checkpoint {
  RunConfig config;
  std::uint64_t seed = 0;
  int episodes = 0;
  double lambda = 0.0;
  AgentNets nets;
};

nlohmann::json to_json(const Checkpoint& ckpt);
/// Throws InvalidInputError on a format-version or shape mismatch.
Checkpoint checkpoint_from_json(const nlohmann::json& j);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RunReport {
  std::filesystem::path directory;
  std::vector<EpisodeRecord> episodes;
  std::optional<MapMetrics> metrics;  // methods with a safety critic only
  std::vector<ReliabilityBin> reliability;
  std::vector<CoveragePoint> coverage;
  std::optional<DeploySummary> deploy;
  TheoremResult theorem;
};

/// Trains one seed and writes manifest.json, training.csv, checkpoints and the
/// report bundle into <root>/<run directory name>.
RunReport cmd_train(const RunConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& root);

struct DeployReport {
  std::filesystem::path directory;
  std::vector<DeployEpisode> episodes;
  DeploySummary summary;
};

DeployReport cmd_deploy(const std::filesystem::path& checkpoint, int episodes,
                        std::uint64_t seed, const std::filesystem::path& root);

struct CostmapReport {
  std::filesystem::path directory;
  CostMap map;
  MapMetrics metrics;
};

CostmapReport cmd_costmap(const std::filesystem::path& checkpoint, int resolution,
                          const std::filesystem::path& root);

struct TheoremReport {
  std::filesystem::path directory;
  TheoremResult result;
};

/// Monte-Carlo draws come from the "theorem" stream of `seed`.
TheoremReport cmd_theorem1(const TheoremConfig& cfg, std::uint64_t seed,
                           const std::filesystem::path& root);

struct SweepReport {
  std::filesystem::path directory;  // holds the aggregated pareto.csv
  std::vector<std::filesystem::path> runs;
  std::vector<ParetoRow> pareto;
};

/// Seeds are the first `n_seeds` entries of cfg.seeds, extended by counting
/// up from the last listed seed. Runs execute on up to `workers` threads.
SweepReport cmd_sweep(const RunConfig& cfg, int n_seeds, const std::filesystem::path& root,
                      int workers = 0);

std::vector<std::uint64_t> sweep_seeds(const RunConfig& cfg, int n_seeds);

}  // namespace usc

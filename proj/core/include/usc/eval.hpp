#pragma once

// Evaluation harness: predictive cost maps and their metrics, calibration
// curves, deployment rollouts, Pareto aggregation and the Monte-Carlo check
// of the uniform-vs-policy conservatism bound.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "usc/agent.hpp"
#include "usc/diffnet.hpp"
#include "usc/envs.hpp"
#include "usc/replay.hpp"
#include "usc/rng.hpp"

namespace usc {

// ---------------------------------------------------------------------------
// Cost maps

enum class MapAction { policy, probe_min };

struct CostMap {
  Grid predicted;
  GroundTruthField truth;
};

/// The eight nonzero points of {-1, 0, 1}^2, one per column.
Eigen::MatrixXd probe_actions();

/// Q_C(s(cell), pi(s(cell))) at every cell centre, or the minimum over the
/// probe set with MapAction::probe_min. Paired with the ground-truth field.
CostMap predict_cost_map(const NetworkParameters& actor, const NetworkParameters& safety_critic,
                         const PointGoalConfig& cfg, const Layout& layout, int resolution,
                         MapAction reduction = MapAction::policy);
/// Same, for a seeded layout; throws CapabilityError for non-PointGoal envs.
CostMap predict_cost_map(const NetworkParameters& actor, const NetworkParameters& safety_critic,
                         const EnvConfig& env, std::uint64_t layout_seed, int resolution,
                         MapAction reduction = MapAction::policy);

/// Min-max normalisation to [0, 1]; constant maps become all zeros.
std::vector<double> normalize_map(std::span<const double> values);

struct MapMetrics {
  double gradient_mse = 0.0;
  double contrast_error = 0.0;
  double entropy_error = 0.0;
};

/// Mean over interior cells of the squared difference between central-difference
/// gradients (cell units) of the normalised maps. Requires G >= 3.
double gradient_mse(const Grid& pred, const Grid& truth);
/// |contrast(pred) - contrast(truth)|, contrast = mean normalised value over
/// hazard cells (truth > 0) minus the mean over safe cells.
double contrast_error(const Grid& pred, const Grid& truth);
/// |H(pred) - H(truth)| of the min-shifted maps read as distributions over cells.
double entropy_error(const Grid& pred, const Grid& truth);
/// Shannon entropy (natural log) of a min-shifted map; all-zero maps are uniform.
double map_entropy(std::span<const double> values);
MapMetrics map_metrics(const CostMap& map);

/// One-line formula for each metric, printed as a report header.
std::vector<std::string> metric_definitions();

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationData {
  std::vector<double> uncertainty;
  std::vector<double> error;

  void add(double u, double err);
  std::size_t size() const { return uncertainty.size(); }
};

struct ReliabilityBin {
  double mean_uncertainty = 0.0;
  double mean_error = 0.0;
  std::size_t count = 0;
};

/// Equal-count bins by ascending uncertainty (ties broken by insertion order);
/// the first N mod n_bins bins hold one extra sample.
std::vector<ReliabilityBin> reliability_curve(const CalibrationData& data, int n_bins);

struct CoveragePoint {
  double coverage = 0.0;
  double mean_error = 0.0;
};

/// Mean error over the ceil(qN) most confident samples for q = 0.1, ..., 1.0.
std::vector<CoveragePoint> risk_coverage(const CalibrationData& data);

/// Spearman rank correlation with average ranks for ties; 0 if either side
/// is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct CalibrationConfig {
  int episodes = 10;
  int reference = 256;  // replay samples anchoring the influence scores
};

/// Noise-free screened rollouts; each visited (s, a) is paired with its
/// influence score against a replay reference batch and the absolute error of
/// Q_C against the realised discounted cost-to-go of the trajectory.
CalibrationData collect_calibration(const AgentNets& nets, const AgentConfig& agent,
                                    const EnvConfig& env, const ReplayBuffer& buffer,
                                    const CalibrationConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Deployment

struct DeployEpisode {
  int episode = 0;
  std::uint64_t layout_seed = 0;
  double reward = 0.0;
  double cost = 0.0;
  bool success = false;
  int steps = 0;
};

struct DeploySummary {
  int episodes = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_cost = 0.0;
  double std_cost = 0.0;
  double success_rate = 0.0;
};

/// Layout seed of deployment episode `episode` under `seed`.
std::uint64_t deploy_layout_seed(std::uint64_t seed, int episode);

/// Noise-free rollouts; screening is active for methods with a safety critic.
std::vector<DeployEpisode> deploy(const AgentNets& nets, const AgentConfig& agent,
                                  const EnvConfig& env, int episodes, std::uint64_t seed);
DeploySummary summarize(std::span<const DeployEpisode> episodes);

// ---------------------------------------------------------------------------
// Pareto

struct RunOutcome {
  std::string method;
  double reward = 0.0;  // mean over the final window
  double cost = 0.0;
};

struct ParetoRow {
  std::string method;
  int runs = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_cost = 0.0;
  double std_cost = 0.0;
};

inline constexpr int kFinalWindow = 50;

/// Means over the last `window` episodes (all of them if fewer).
RunOutcome final_window(const std::string& method, std::span<const EpisodeRecord> records,
                        int window = kFinalWindow);
/// One row per method in first-appearance order; population std across runs.
std::vector<ParetoRow> pareto_export(std::span<const RunOutcome> runs);

// ---------------------------------------------------------------------------
// Uniform-vs-policy conservatism bound

struct TheoremConfig {
  double lower = 0.0;
  double upper = 1.0;
  double tau = 1.0;
  double p_pi = 0.1;
  double p_unif = 0.5;
  int m = 10;
  double temperature = 1.0;
  long draws = 100000;

  void validate() const;
};

inline constexpr long kTheoremMinDraws = 10000;

struct TheoremResult {
  double mean_max_unif = 0.0;
  double mean_max_pi = 0.0;
  double gap = 0.0;
  double gap_se = 0.0;
  double closed_form_gap = 0.0;
  double bound = 0.0;
  double lse_gap = 0.0;
  double lse_gap_se = 0.0;
  double lse_bound = 0.0;  // bound - temperature * log m
  bool pass = false;       // gap + 3 se >= bound
  bool lse_pass = false;
  bool low_draws = false;
};

/// Expected maximum of m draws from the two-valued critic.
double expected_max(double lower, double upper, double p, int m);

TheoremResult theorem1_check(const TheoremConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// CSV output ('.' decimal separator, 17 significant digits)

void write_costmap_csv(std::ostream& os, const CostMap& map);
void write_metrics_csv(std::ostream& os, const MapMetrics& m);
void write_reliability_csv(std::ostream& os, std::span<const ReliabilityBin> bins);
void write_risk_coverage_csv(std::ostream& os, std::span<const CoveragePoint> points);
void write_pareto_csv(std::ostream& os, std::span<const ParetoRow> rows);
void write_theorem1_csv(std::ostream& os, const TheoremConfig& cfg, const TheoremResult& r);
void write_deploy_csv(std::ostream& os, std::span<const DeployEpisode> episodes);
void write_training_csv(std::ostream& os, std::span<const EpisodeRecord> records);
void write_training_header(std::ostream& os);
void write_training_row(std::ostream& os, const EpisodeRecord& r);

/// Prepares a stream for CSV output: classic locale, 17 significant digits.
void csv_format(std::ostream& os);

}  // namespace usc

#pragma once

// Influence-based uncertainty for the safety critic and the refinement stage
// that regresses the most uncertain samples toward neighbour-interpolated
// targets under a trust-region penalty.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "usc/diffnet.hpp"

namespace usc {

struct InfluenceConfig {
  double damping = 1e-6;
  InfluenceScope scope = InfluenceScope::full_parameters;

  void validate() const;
};

/// Networks up to this many parameters use full-parameter influence by default.
inline constexpr std::size_t kFullInfluenceMaxParams = 5000;

InfluenceScope default_influence_scope(const NetworkSpec& spec);

/// sum_i g_i g_iᵀ + damping * I. Requires at least one gradient.
Eigen::MatrixXd gauss_newton_matrix(std::span<const GradientRecord> grads, double damping);
/// Same, with one gradient per column.
Eigen::MatrixXd gauss_newton_matrix(const Eigen::MatrixXd& grads, double damping);

/// gᵀ M⁻¹ g through a Cholesky solve.
double influence(const GradientRecord& query, const Eigen::MatrixXd& gn_matrix);
/// Row-wise gᵀ M⁻¹ g for every column of `queries`, sharing one factorisation.
Eigen::VectorXd influence_batch(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gn_matrix);

/// Influence scores computed in the B x B Gram space of the reference
/// gradients, never forming the P' x P' matrix. With G the reference
/// gradients and K = GᵀG:
///   in-reference sample i:  u_i = [(K + dI)⁻¹ K]_ii
///   arbitrary query g:      u = (gᵀg - kᵀ (K + dI)⁻¹ k) / d,  k = Gᵀg
/// Both equal gᵀ (GGᵀ + dI)⁻¹ g exactly in real arithmetic.
class GramInfluence {
 public:
  GramInfluence(const NetworkParameters& frozen_critic, Eigen::MatrixXd reference_inputs,
                InfluenceConfig cfg);

  /// Scores for the reference samples themselves.
  Eigen::VectorXd reference_scores() const;
  /// Scores for arbitrary critic inputs (one per column).
  Eigen::VectorXd score(const Eigen::MatrixXd& query_inputs) const;

  const Eigen::MatrixXd& gram() const { return gram_; }

 private:
  NetworkParameters frozen_;
  Eigen::MatrixXd reference_;
  InfluenceConfig cfg_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
};

struct UncertaintyScore {
  double u = 0.0;
  double weight = 0.0;  // log(1 + u) * (1 + [q > batch mean])
  bool above_mean = false;
};

/// log(1 + u) * (1 + 1{q > batch_mean}); ties at the mean do not count.
double adjust_weight(double u, double q, double batch_mean);
UncertaintyScore score_sample(double u, double q, double batch_mean);

/// Indices of the n largest scores, descending; ties go to the lower index.
std::vector<std::size_t> select_top_uncertain(
    std::span<const std::pair<std::size_t, double>> scores, std::size_t n);

/// Exact-match cutoff for inverse-distance interpolation.
inline constexpr double kExactMatchDistance = 1e-9;

struct InterpolatedTarget {
  std::vector<double> weights;
  std::vector<double> costs;
  double target = 0.0;
};

/// Inverse-distance weighted average of neighbour costs.
InterpolatedTarget interpolate_cost(std::span<const double> distances,
                                    std::span<const double> costs);

struct RefineConfig {
  int top_n = 4;
  int neighbours = 5;
  double beta = 1.0;
  double trust_eps = 0.01;

  void validate() const;
};

/// Divergence between two scalar predictions, read as unit-variance Gaussians.
inline double prediction_divergence(double q, double q_old) {
  return 0.5 * (q - q_old) * (q - q_old);
}

struct RefineLoss {
  double loss = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd q;
  Eigen::VectorXd q_old;
  int trust_hits = 0;  // anchors whose divergence exceeds trust_eps
};

/// Mean over anchors of 1/2 (Q_C - target)^2 + beta * max(0, D - trust_eps)^2
/// where D compares the live critic with the frozen snapshot.
RefineLoss refine_loss(const NetworkParameters& critic, const NetworkParameters& frozen,
                       const Eigen::MatrixXd& anchors, std::span<const double> targets,
                       double beta, double trust_eps);

/// Snapshot of the critic used for influence gradients and the trust penalty.
inline NetworkParameters refresh_frozen(const NetworkParameters& critic) { return critic; }

}  // namespace usc

#include "usc/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "usc/errors.hpp"

namespace usc {

void InfluenceConfig::validate() const {
  if (!(damping > 0.0)) throw InvalidInputError("Gauss-Newton damping must be > 0");
}

InfluenceScope default_influence_scope(const NetworkSpec& spec) {
  return spec.parameter_count() <= kFullInfluenceMaxParams ? InfluenceScope::full_parameters
                                                           : InfluenceScope::last_layer;
}

Eigen::MatrixXd gauss_newton_matrix(const Eigen::MatrixXd& grads, double damping) {
  if (grads.cols() < 1) throw InvalidInputError("Gauss-Newton sum needs at least one gradient");
  if (!(damping > 0.0)) throw InvalidInputError("Gauss-Newton damping must be > 0");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(grads.rows(), grads.rows());
  m.selfadjointView<Eigen::Lower>().rankUpdate(grads);
  m = m.selfadjointView<Eigen::Lower>();
  m.diagonal().array() += damping;
  return m;
}

Eigen::MatrixXd gauss_newton_matrix(std::span<const GradientRecord> grads, double damping) {
  if (grads.empty()) throw InvalidInputError("Gauss-Newton sum needs at least one gradient");
  const auto p = grads.front().size();
  Eigen::MatrixXd g(p, static_cast<Eigen::Index>(grads.size()));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != p) {
      throw InvalidInputError("gradient " + std::to_string(i) + " has length " +
                              std::to_string(grads[i].size()) + ", expected " +
                              std::to_string(p));
    }
    g.col(static_cast<Eigen::Index>(i)) = grads[i];
  }
  return gauss_newton_matrix(g, damping);
}

Eigen::VectorXd influence_batch(const Eigen::MatrixXd& queries,
                                const Eigen::MatrixXd& gn_matrix) {
  if (gn_matrix.rows() != gn_matrix.cols() || queries.rows() != gn_matrix.rows()) {
    throw InvalidInputError("query gradient length does not match the Gauss-Newton matrix");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gn_matrix);
  if (llt.info() != Eigen::Success) {
    throw NumericError("Cholesky factorisation of the Gauss-Newton matrix failed");
  }
  const Eigen::MatrixXd solved = llt.solve(queries);
  Eigen::VectorXd u = (queries.array() * solved.array()).colwise().sum().transpose();
  return u.cwiseMax(0.0);
}

double influence(const GradientRecord& query, const Eigen::MatrixXd& gn_matrix) {
  return influence_batch(query, gn_matrix)[0];
}

namespace {

// Per-column squared norms of per-sample output gradients.
Eigen::VectorXd gradient_sq_norms(const NetworkParameters& params, const Eigen::MatrixXd& inputs,
                                  InfluenceScope scope) {
  ForwardTape tape;
  forward_tape(params, inputs, tape);
  Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(params.spec().output_size(), inputs.cols());
  seed.row(0).setOnes();
  const auto deltas = backward_deltas(params, tape, seed);
  const std::size_t first = scope == InfluenceScope::full_parameters ? 0 : deltas.size() - 1;
  Eigen::VectorXd norms = Eigen::VectorXd::Zero(inputs.cols());
  for (std::size_t l = first; l < deltas.size(); ++l) {
    norms.array() += deltas[l].colwise().squaredNorm().transpose().array() *
                     (tape.activations[l].colwise().squaredNorm().transpose().array() + 1.0);
  }
  return norms;
}

}  // namespace

GramInfluence::GramInfluence(const NetworkParameters& frozen_critic,
                             Eigen::MatrixXd reference_inputs, InfluenceConfig cfg)
    : frozen_(frozen_critic), reference_(std::move(reference_inputs)), cfg_(cfg) {
  cfg_.validate();
  if (reference_.cols() < 1) throw InvalidInputError("influence needs a nonempty reference batch");
  gram_ = gradient_cross_gram(frozen_, reference_, reference_, 0, cfg_.scope);
  Eigen::MatrixXd damped = gram_;
  damped.diagonal().array() += cfg_.damping;
  factor_.compute(damped);
  if (factor_.info() != Eigen::Success) {
    throw NumericError("Cholesky factorisation of the damped Gram matrix failed");
  }
}

Eigen::VectorXd GramInfluence::reference_scores() const {
  const Eigen::MatrixXd x = factor_.solve(gram_);
  return x.diagonal().cwiseMax(0.0);
}

Eigen::VectorXd GramInfluence::score(const Eigen::MatrixXd& query_inputs) const {
  const Eigen::MatrixXd k = gradient_cross_gram(frozen_, reference_, query_inputs, 0, cfg_.scope);
  const Eigen::MatrixXd solved = factor_.solve(k);
  const Eigen::VectorXd self = gradient_sq_norms(frozen_, query_inputs, cfg_.scope);
  const Eigen::VectorXd proj = (k.array() * solved.array()).colwise().sum().transpose();
  return ((self - proj) / cfg_.damping).cwiseMax(0.0);
}

double adjust_weight(double u, double q, double batch_mean) {
  if (!(u >= 0.0)) throw InvalidInputError("uncertainty must be >= 0");
  return std::log1p(u) * (q > batch_mean ? 2.0 : 1.0);
}

UncertaintyScore score_sample(double u, double q, double batch_mean) {
  return {u, adjust_weight(u, q, batch_mean), q > batch_mean};
}

std::vector<std::size_t> select_top_uncertain(
    std::span<const std::pair<std::size_t, double>> scores, std::size_t n) {
  if (n > scores.size()) {
    throw StateError("cannot select " + std::to_string(n) + " samples from " +
                     std::to_string(scores.size()));
  }
  std::vector<std::pair<std::size_t, double>> sorted(scores.begin(), scores.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sorted[i].first);
  return out;
}

InterpolatedTarget interpolate_cost(std::span<const double> distances,
                                    std::span<const double> costs) {
  if (distances.empty() || distances.size() != costs.size()) {
    throw InvalidInputError("interpolation needs matching, nonempty distance and cost lists");
  }
  InterpolatedTarget t;
  t.costs.assign(costs.begin(), costs.end());
  t.weights.assign(distances.size(), 0.0);
  const auto exact = std::find_if(distances.begin(), distances.end(),
                                  [](double d) { return d < kExactMatchDistance; });
  if (exact != distances.end()) {
    const auto k = static_cast<std::size_t>(exact - distances.begin());
    t.weights[k] = 1.0;
    t.target = costs[k];
    return t;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    t.weights[k] = 1.0 / distances[k];
    total += t.weights[k];
  }
  for (std::size_t k = 0; k < distances.size(); ++k) {
    t.weights[k] /= total;
    t.target += t.weights[k] * costs[k];
  }
  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  t.target = std::clamp(t.target, *lo, *hi);
  return t;
}

void RefineConfig::validate() const {
  if (top_n < 1) throw InvalidInputError("refine top_n must be >= 1");
  if (neighbours < 1) throw InvalidInputError("refine neighbour count must be >= 1");
  if (!(beta >= 0.0)) throw InvalidInputError("trust-region beta must be >= 0");
  if (!(trust_eps >= 0.0)) throw InvalidInputError("trust threshold must be >= 0");
}

RefineLoss refine_loss(const NetworkParameters& critic, const NetworkParameters& frozen,
                       const Eigen::MatrixXd& anchors, std::span<const double> targets,
                       double beta, double trust_eps) {
  const auto n = anchors.cols();
  if (n == 0) throw InvalidInputError("refine_loss needs at least one uncertain sample");
  if (targets.size() != static_cast<std::size_t>(n)) {
    throw InvalidInputError("one interpolated target is required per anchor");
  }
  RefineLoss out;
  ForwardTape tape;
  out.q = forward_tape(critic, anchors, tape).row(0).transpose();
  out.q_old = forward_batch(frozen, anchors).row(0).transpose();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd d(1, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q = out.q[i];
    const double q_old = out.q_old[i];
    const double residual = q - targets[static_cast<std::size_t>(i)];
    const double excess = std::max(0.0, prediction_divergence(q, q_old) - trust_eps);
    if (excess > 0.0) ++out.trust_hits;
    total += 0.5 * residual * residual + beta * excess * excess;
    d(0, i) = inv_n * (residual + 2.0 * beta * excess * (q - q_old));
  }
  out.loss = total * inv_n;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite refinement loss");
  out.grad = backward(critic, tape, d).param_grad;
  return out;
}

}  // namespace usc

#pragma once

// Dense feedforward networks with hand-written reverse-mode differentiation.
//
// Parameters live in one flat vector; per-layer weight matrices (out x in,
// column-major) and biases are views into it, so the flat and structured
// views can never disagree. Batched evaluation takes one sample per column.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "usc/rng.hpp"

namespace usc {

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct NetworkSpec {
  std::vector<int> layer_sizes;         // input, hidden..., output
  std::vector<Activation> activations;  // one per weight layer

  /// Fully connected MLP with a shared hidden activation.
  static NetworkSpec mlp(int inputs, const std::vector<int>& hidden, int outputs,
                         Activation hidden_act, Activation output_act);

  void validate() const;
  std::size_t num_layers() const { return activations.size(); }
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

class NetworkParameters {
 public:
  using WeightMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstWeightMap = Eigen::Map<const Eigen::MatrixXd>;
  using BiasMap = Eigen::Map<Eigen::VectorXd>;
  using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;

  NetworkParameters() = default;
  /// All-zero parameters for `spec`.
  explicit NetworkParameters(NetworkSpec spec);
  NetworkParameters(NetworkSpec spec, Eigen::VectorXd flat);

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static NetworkParameters initialized(const NetworkSpec& spec, Rng& rng);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t size() const { return static_cast<std::size_t>(flat_.size()); }

  Eigen::VectorXd& flat() { return flat_; }
  const Eigen::VectorXd& flat() const { return flat_; }

  WeightMap weights(std::size_t layer);
  ConstWeightMap weights(std::size_t layer) const;
  BiasMap bias(std::size_t layer);
  ConstBiasMap bias(std::size_t layer) const;

  /// Flat offset of layer `layer`'s weight block; its bias follows it.
  std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }

 private:
  void build_offsets();

  NetworkSpec spec_;
  Eigen::VectorXd flat_;
  std::vector<std::size_t> offsets_;
};

/// Post-activation values of every layer for one batched forward pass;
/// `activations[0]` is the input and `activations.back()` the output.
struct ForwardTape {
  std::vector<Eigen::MatrixXd> activations;
  const Eigen::MatrixXd& output() const { return activations.back(); }
};

Eigen::VectorXd forward(const NetworkParameters& params, const Eigen::VectorXd& input);
Eigen::MatrixXd forward_batch(const NetworkParameters& params, const Eigen::MatrixXd& inputs);
const Eigen::MatrixXd& forward_tape(const NetworkParameters& params,
                                    const Eigen::MatrixXd& inputs, ForwardTape& tape);

/// Gradients of the scalar sum_j <output_grad(:,j), output(:,j)>.
struct Backprop {
  Eigen::VectorXd param_grad;  // length P, summed over the batch
  Eigen::MatrixXd input_grad;  // inputs x batch; empty unless requested
};

Backprop backward(const NetworkParameters& params, const ForwardTape& tape,
                  const Eigen::MatrixXd& output_grad, bool want_input_grad = false);

/// Pre-activation sensitivities per layer (layer l: out_l x batch). Together
/// with the tape they determine every per-sample parameter gradient.
std::vector<Eigen::MatrixXd> backward_deltas(const NetworkParameters& params,
                                             const ForwardTape& tape,
                                             const Eigen::MatrixXd& output_grad);

using GradientRecord = Eigen::VectorXd;

/// d output[output_index] / d theta for a single input.
GradientRecord grad_params(const NetworkParameters& params, const Eigen::VectorXd& input,
                           int output_index = 0);

/// Which coordinates enter per-sample gradients for influence computations.
enum class InfluenceScope { full_parameters, last_layer };

std::size_t scoped_parameter_count(const NetworkSpec& spec, InfluenceScope scope);

/// Per-sample gradients of one output, one column per input (P' x batch).
Eigen::MatrixXd per_sample_gradients(const NetworkParameters& params,
                                     const Eigen::MatrixXd& inputs, int output_index,
                                     InfluenceScope scope);

/// Cross inner products G_aᵀ G_b of per-sample gradients without forming
/// them: for each layer, (D_aᵀ D_b) ∘ (A_aᵀ A_b + 1).
Eigen::MatrixXd gradient_cross_gram(const NetworkParameters& params,
                                    const Eigen::MatrixXd& inputs_a,
                                    const Eigen::MatrixXd& inputs_b, int output_index,
                                    InfluenceScope scope);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t parameter_count);
};

/// One bias-corrected Adam step in place. Throws NumericError naming the first
/// non-finite gradient coordinate.
void adam_step(NetworkParameters& params, const Eigen::VectorXd& grad, AdamState& state,
               double lr);

/// Plain gradient descent step in place.
void sgd_step(NetworkParameters& params, const Eigen::VectorXd& grad, double lr);

/// tau * online + (1 - tau) * target.
NetworkParameters soft_update(const NetworkParameters& target,
                              const NetworkParameters& online, double tau);

}  // namespace usc

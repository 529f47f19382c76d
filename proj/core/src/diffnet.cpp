#include "usc/diffnet.hpp"

#include <cmath>
#include <string>

#include "usc/errors.hpp"

namespace usc {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw InvalidInputError("unknown activation '" + std::string(name) + "'");
}

NetworkSpec NetworkSpec::mlp(int inputs, const std::vector<int>& hidden, int outputs,
                             Activation hidden_act, Activation output_act) {
  NetworkSpec spec;
  spec.layer_sizes.push_back(inputs);
  for (int h : hidden) {
    spec.layer_sizes.push_back(h);
    spec.activations.push_back(hidden_act);
  }
  spec.layer_sizes.push_back(outputs);
  spec.activations.push_back(output_act);
  spec.validate();
  return spec;
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw InvalidInputError("network needs at least an input and an output layer");
  }
  for (int n : layer_sizes) {
    if (n < 1) throw InvalidInputError("layer sizes must be positive");
  }
  if (activations.size() != layer_sizes.size() - 1) {
    throw InvalidInputError("expected " + std::to_string(layer_sizes.size() - 1) +
                            " activations, got " + std::to_string(activations.size()));
  }
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t p = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    p += static_cast<std::size_t>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
  }
  return p;
}

NetworkParameters::NetworkParameters(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  flat_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec_.parameter_count()));
  build_offsets();
}

NetworkParameters::NetworkParameters(NetworkSpec spec, Eigen::VectorXd flat)
    : spec_(std::move(spec)), flat_(std::move(flat)) {
  spec_.validate();
  if (static_cast<std::size_t>(flat_.size()) != spec_.parameter_count()) {
    throw InvalidInputError("flat parameter vector has length " + std::to_string(flat_.size()) +
                            ", spec requires " + std::to_string(spec_.parameter_count()));
  }
  build_offsets();
}

void NetworkParameters::build_offsets() {
  offsets_.clear();
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(spec_.layer_sizes[l + 1]) * (spec_.layer_sizes[l] + 1);
  }
}

NetworkParameters NetworkParameters::initialized(const NetworkSpec& spec, Rng& rng) {
  NetworkParameters p(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = p.weights(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
    auto b = p.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
  }
  return p;
}

NetworkParameters::WeightMap NetworkParameters::weights(std::size_t layer) {
  return WeightMap(flat_.data() + offsets_[layer], spec_.layer_sizes[layer + 1],
                   spec_.layer_sizes[layer]);
}

NetworkParameters::ConstWeightMap NetworkParameters::weights(std::size_t layer) const {
  return ConstWeightMap(flat_.data() + offsets_[layer], spec_.layer_sizes[layer + 1],
                        spec_.layer_sizes[layer]);
}

NetworkParameters::BiasMap NetworkParameters::bias(std::size_t layer) {
  const auto rows = spec_.layer_sizes[layer + 1];
  return BiasMap(flat_.data() + offsets_[layer] + static_cast<std::size_t>(rows) *
                                                      spec_.layer_sizes[layer],
                 rows);
}

NetworkParameters::ConstBiasMap NetworkParameters::bias(std::size_t layer) const {
  const auto rows = spec_.layer_sizes[layer + 1];
  return ConstBiasMap(flat_.data() + offsets_[layer] + static_cast<std::size_t>(rows) *
                                                           spec_.layer_sizes[layer],
                      rows);
}

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::identity: break;
  }
}

// Derivative expressed through the post-activation value.
void scale_by_derivative(Activation act, const Eigen::MatrixXd& post, Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::relu:
      grad = (post.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::tanh:
      grad.array() *= 1.0 - post.array().square();
      break;
    case Activation::identity: break;
  }
}

void check_input_rows(const NetworkParameters& params, Eigen::Index rows) {
  if (rows != params.spec().input_size()) {
    throw InvalidInputError("input has dimension " + std::to_string(rows) +
                            ", network expects " + std::to_string(params.spec().input_size()));
  }
}

}  // namespace

const Eigen::MatrixXd& forward_tape(const NetworkParameters& params,
                                    const Eigen::MatrixXd& inputs, ForwardTape& tape) {
  check_input_rows(params, inputs.rows());
  const auto& spec = params.spec();
  tape.activations.resize(spec.num_layers() + 1);
  tape.activations[0] = inputs;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Eigen::MatrixXd z = params.weights(l) * tape.activations[l];
    z.colwise() += params.bias(l);
    apply_activation(spec.activations[l], z);
    tape.activations[l + 1] = std::move(z);
  }
  return tape.output();
}

Eigen::MatrixXd forward_batch(const NetworkParameters& params, const Eigen::MatrixXd& inputs) {
  check_input_rows(params, inputs.rows());
  const auto& spec = params.spec();
  Eigen::MatrixXd x = inputs;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Eigen::MatrixXd z = params.weights(l) * x;
    z.colwise() += params.bias(l);
    apply_activation(spec.activations[l], z);
    x = std::move(z);
  }
  return x;
}

Eigen::VectorXd forward(const NetworkParameters& params, const Eigen::VectorXd& input) {
  return forward_batch(params, input);
}

std::vector<Eigen::MatrixXd> backward_deltas(const NetworkParameters& params,
                                             const ForwardTape& tape,
                                             const Eigen::MatrixXd& output_grad) {
  const auto& spec = params.spec();
  const std::size_t layers = spec.num_layers();
  if (tape.activations.size() != layers + 1) {
    throw InvalidInputError("forward tape does not match network depth");
  }
  if (output_grad.rows() != spec.output_size() ||
      output_grad.cols() != tape.output().cols()) {
    throw InvalidInputError("output gradient shape does not match forward output");
  }
  std::vector<Eigen::MatrixXd> deltas(layers);
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t l = layers; l-- > 0;) {
    scale_by_derivative(spec.activations[l], tape.activations[l + 1], delta);
    deltas[l] = delta;
    if (l > 0) delta = params.weights(l).transpose() * deltas[l];
  }
  return deltas;
}

Backprop backward(const NetworkParameters& params, const ForwardTape& tape,
                  const Eigen::MatrixXd& output_grad, bool want_input_grad) {
  const auto deltas = backward_deltas(params, tape, output_grad);
  Backprop out;
  out.param_grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  for (std::size_t l = 0; l < deltas.size(); ++l) {
    const auto off = static_cast<Eigen::Index>(params.layer_offset(l));
    const auto rows = deltas[l].rows();
    const auto cols = tape.activations[l].rows();
    Eigen::Map<Eigen::MatrixXd>(out.param_grad.data() + off, rows, cols).noalias() =
        deltas[l] * tape.activations[l].transpose();
    out.param_grad.segment(off + rows * cols, rows) = deltas[l].rowwise().sum();
  }
  if (want_input_grad) out.input_grad = params.weights(0).transpose() * deltas[0];
  return out;
}

GradientRecord grad_params(const NetworkParameters& params, const Eigen::VectorXd& input,
                           int output_index) {
  if (output_index < 0 || output_index >= params.spec().output_size()) {
    throw InvalidInputError("output index " + std::to_string(output_index) + " out of range");
  }
  ForwardTape tape;
  forward_tape(params, input, tape);
  Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(params.spec().output_size(), 1);
  seed(output_index, 0) = 1.0;
  return backward(params, tape, seed).param_grad;
}

std::size_t scoped_parameter_count(const NetworkSpec& spec, InfluenceScope scope) {
  if (scope == InfluenceScope::full_parameters) return spec.parameter_count();
  const auto n = spec.layer_sizes.size();
  return static_cast<std::size_t>(spec.layer_sizes[n - 1]) * (spec.layer_sizes[n - 2] + 1);
}

namespace {

std::vector<Eigen::MatrixXd> output_deltas(const NetworkParameters& params,
                                           const Eigen::MatrixXd& inputs, int output_index,
                                           ForwardTape& tape) {
  if (output_index < 0 || output_index >= params.spec().output_size()) {
    throw InvalidInputError("output index " + std::to_string(output_index) + " out of range");
  }
  forward_tape(params, inputs, tape);
  Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(params.spec().output_size(), inputs.cols());
  seed.row(output_index).setOnes();
  return backward_deltas(params, tape, seed);
}

}  // namespace

Eigen::MatrixXd per_sample_gradients(const NetworkParameters& params,
                                     const Eigen::MatrixXd& inputs, int output_index,
                                     InfluenceScope scope) {
  ForwardTape tape;
  const auto deltas = output_deltas(params, inputs, output_index, tape);
  const std::size_t first =
      scope == InfluenceScope::full_parameters ? 0 : deltas.size() - 1;
  const auto base = static_cast<Eigen::Index>(params.layer_offset(first));
  const auto rows = static_cast<Eigen::Index>(scoped_parameter_count(params.spec(), scope));
  Eigen::MatrixXd grads(rows, inputs.cols());
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
    for (std::size_t l = first; l < deltas.size(); ++l) {
      const auto off = static_cast<Eigen::Index>(params.layer_offset(l)) - base;
      const auto out = deltas[l].rows();
      const auto in = tape.activations[l].rows();
      Eigen::Map<Eigen::MatrixXd>(grads.col(i).data() + off, out, in).noalias() =
          deltas[l].col(i) * tape.activations[l].col(i).transpose();
      grads.col(i).segment(off + out * in, out) = deltas[l].col(i);
    }
  }
  return grads;
}

Eigen::MatrixXd gradient_cross_gram(const NetworkParameters& params,
                                    const Eigen::MatrixXd& inputs_a,
                                    const Eigen::MatrixXd& inputs_b, int output_index,
                                    InfluenceScope scope) {
  ForwardTape tape_a;
  ForwardTape tape_b;
  const auto da = output_deltas(params, inputs_a, output_index, tape_a);
  const auto db = output_deltas(params, inputs_b, output_index, tape_b);
  const std::size_t first = scope == InfluenceScope::full_parameters ? 0 : da.size() - 1;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(inputs_a.cols(), inputs_b.cols());
  for (std::size_t l = first; l < da.size(); ++l) {
    Eigen::MatrixXd act = tape_a.activations[l].transpose() * tape_b.activations[l];
    act.array() += 1.0;
    gram.array() += (da[l].transpose() * db[l]).array() * act.array();
  }
  return gram;
}

AdamState::AdamState(std::size_t parameter_count)
    : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))),
      v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))) {}

void adam_step(NetworkParameters& params, const Eigen::VectorXd& grad, AdamState& state,
               double lr) {
  const auto n = static_cast<Eigen::Index>(params.size());
  if (grad.size() != n || state.m.size() != n || state.v.size() != n) {
    throw InvalidInputError("gradient/optimizer length does not match parameter count " +
                            std::to_string(n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("non-finite gradient at coordinate " + std::to_string(i), i);
    }
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.flat().array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

void sgd_step(NetworkParameters& params, const Eigen::VectorXd& grad, double lr) {
  if (grad.size() != static_cast<Eigen::Index>(params.size())) {
    throw InvalidInputError("gradient length does not match parameter count");
  }
  params.flat() -= lr * grad;
}

NetworkParameters soft_update(const NetworkParameters& target,
                              const NetworkParameters& online, double tau) {
  if (!(target.spec() == online.spec())) {
    throw InvalidInputError("soft_update: target and online networks differ in spec");
  }
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw InvalidInputError("soft_update: tau must lie in (0, 1]");
  }
  if (tau == 1.0) return online;
  NetworkParameters out = target;
  out.flat() += tau * (online.flat() - target.flat());
  return out;
}

}  // namespace usc

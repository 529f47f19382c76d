#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "usc/rng.hpp"

namespace usc {

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  double c = 0.0;
  Eigen::VectorXd s_next;
  bool terminal = false;
};

/// Column-per-sample view of a sampled batch. `indices[j]` is the buffer slot
/// of column j.
struct Minibatch {
  std::vector<std::size_t> indices;
  Eigen::MatrixXd s;
  Eigen::MatrixXd a;
  Eigen::VectorXd r;
  Eigen::VectorXd c;
  Eigen::MatrixXd s_next;
  Eigen::VectorXd terminal;  // 1.0 for terminal transitions, else 0.0

  std::size_t size() const { return indices.size(); }
  /// Stacked (s; a) critic inputs.
  Eigen::MatrixXd state_actions() const;
};

/// Per-dimension standardisation for joint (s, a) distances.
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd inv_std;
};

struct Neighbour {
  std::size_t index;
  double distance;
};

/// Fixed-capacity FIFO ring buffer of transitions stored column-wise.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int state_dim, int action_dim);

  void push(const Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  /// Slot that the next push overwrites once the buffer is full.
  std::size_t cursor() const { return cursor_; }

  /// Record in storage slot `index` (0 <= index < size()).
  Transition at(std::size_t index) const;
  double cost(std::size_t index) const { return c_[static_cast<Eigen::Index>(index)]; }

  /// Uniform sampling with replacement. Throws StateError on an empty buffer.
  Minibatch sample_uniform(std::size_t batch_size, Rng& rng) const;
  Minibatch gather(std::span<const std::size_t> indices) const;

  /// Mean and standard deviation of every (s, a) dimension over the current
  /// contents, from running sums; zero-variance dimensions get unit scale.
  Scaler fit_scaler() const;

  /// K nearest stored records to (s, a) under the scaled Euclidean metric,
  /// ascending by distance with ties broken by lower slot. Slots listed in
  /// `exclude` are skipped. Throws StateError if fewer than K candidates exist.
  std::vector<Neighbour> knn(const Eigen::VectorXd& s, const Eigen::VectorXd& a, std::size_t k,
                             const Scaler& scaler,
                             std::span<const std::size_t> exclude = {}) const;
  /// Same search for every column of `queries` (stacked (s; a)).
  std::vector<std::vector<Neighbour>> knn_batch(const Eigen::MatrixXd& queries, std::size_t k,
                                                const Scaler& scaler,
                                                std::span<const std::size_t> exclude = {}) const;

  /// One row per transition, oldest first: s..., a..., r, c, s_next..., terminal.
  void write_csv(std::ostream& out) const;

 private:
  std::size_t capacity_;
  int state_dim_;
  int action_dim_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  Eigen::MatrixXd x_;    // stacked (s; a) per slot
  Eigen::MatrixXd xsq_;  // elementwise square of x_
  Eigen::MatrixXf screen_;  // float (x; x^2) for the kNN prefilter
  Eigen::VectorXd sum_;
  Eigen::VectorXd sumsq_;
  Eigen::VectorXd r_;
  Eigen::VectorXd c_;
  Eigen::MatrixXd s_next_;
  Eigen::VectorXd terminal_;
};

}  // namespace usc

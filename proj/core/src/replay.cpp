#include "usc/replay.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>

#include "usc/errors.hpp"

namespace usc {

Eigen::MatrixXd Minibatch::state_actions() const {
  Eigen::MatrixXd x(s.rows() + a.rows(), s.cols());
  x.topRows(s.rows()) = s;
  x.bottomRows(a.rows()) = a;
  return x;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity == 0) throw InvalidInputError("replay capacity must be >= 1");
  if (state_dim < 1 || action_dim < 1) throw InvalidInputError("replay dimensions must be >= 1");
  const auto cap = static_cast<Eigen::Index>(capacity);
  x_.resize(state_dim + action_dim, cap);
  xsq_.resize(state_dim + action_dim, cap);
  screen_.resize(2 * (state_dim + action_dim), cap);
  sum_ = Eigen::VectorXd::Zero(state_dim + action_dim);
  sumsq_ = Eigen::VectorXd::Zero(state_dim + action_dim);
  r_.resize(cap);
  c_.resize(cap);
  s_next_.resize(state_dim, cap);
  terminal_.resize(cap);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.s.size() != state_dim_ || t.s_next.size() != state_dim_ || t.a.size() != action_dim_) {
    throw InvalidInputError("transition dimensions do not match the replay buffer");
  }
  if (!(t.c >= 0.0)) throw InvalidInputError("transition cost must be >= 0");
  const auto slot = static_cast<Eigen::Index>(cursor_);
  if (size_ == capacity_) {
    sum_ -= x_.col(slot);
    sumsq_ -= xsq_.col(slot);
  }
  x_.col(slot).head(state_dim_) = t.s;
  x_.col(slot).tail(action_dim_) = t.a;
  xsq_.col(slot) = x_.col(slot).array().square().matrix();
  screen_.col(slot) << x_.col(slot).cast<float>(), xsq_.col(slot).cast<float>();
  sum_ += x_.col(slot);
  sumsq_ += xsq_.col(slot);
  r_[slot] = t.r;
  c_[slot] = t.c;
  s_next_.col(slot) = t.s_next;
  terminal_[slot] = t.terminal ? 1.0 : 0.0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t index) const {
  if (index >= size_) throw StateError("replay index " + std::to_string(index) + " out of range");
  const auto i = static_cast<Eigen::Index>(index);
  return {x_.col(i).head(state_dim_), x_.col(i).tail(action_dim_), r_[i], c_[i], s_next_.col(i), terminal_[i] != 0.0};
}

Minibatch ReplayBuffer::gather(std::span<const std::size_t> indices) const {
  Minibatch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  b.indices.assign(indices.begin(), indices.end());
  b.s.resize(state_dim_, n);
  b.a.resize(action_dim_, n);
  b.r.resize(n);
  b.c.resize(n);
  b.s_next.resize(state_dim_, n);
  b.terminal.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto i = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(j)]);
    if (static_cast<std::size_t>(i) >= size_) throw StateError("replay index out of range");
    b.s.col(j) = x_.col(i).head(state_dim_);
    b.a.col(j) = x_.col(i).tail(action_dim_);
    b.r[j] = r_[i];
    b.c[j] = c_[i];
    b.s_next.col(j) = s_next_.col(i);
    b.terminal[j] = terminal_[i];
  }
  return b;
}

Minibatch ReplayBuffer::sample_uniform(std::size_t batch_size, Rng& rng) const {
  if (size_ == 0) throw StateError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = pick(rng);
  return gather(idx);
}

Scaler ReplayBuffer::fit_scaler() const {
  if (size_ == 0) throw StateError("cannot fit a scaler on an empty replay buffer");
  const double n = static_cast<double>(size_);
  Scaler sc;
  sc.mean = sum_ / n;
  sc.inv_std.resize(sc.mean.size());
  for (Eigen::Index r = 0; r < sc.mean.size(); ++r) {
    const double var = sumsq_[r] / n - sc.mean[r] * sc.mean[r];
    sc.inv_std[r] = var > 1e-12 * (1.0 + sc.mean[r] * sc.mean[r]) ? 1.0 / std::sqrt(var) : 1.0;
  }
  return sc;
}

std::vector<Neighbour> ReplayBuffer::knn(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                         std::size_t k, const Scaler& scaler,
                                         std::span<const std::size_t> exclude) const {
  if (s.size() != state_dim_ || a.size() != action_dim_) {
    throw InvalidInputError("knn query dimensions do not match the replay buffer");
  }
  Eigen::MatrixXd q(state_dim_ + action_dim_, 1);
  q.col(0) << s, a;
  return knn_batch(q, k, scaler, exclude).front();
}

std::vector<std::vector<Neighbour>> ReplayBuffer::knn_batch(
    const Eigen::MatrixXd& queries, std::size_t k, const Scaler& scaler,
    std::span<const std::size_t> exclude) const {
  const int d = state_dim_ + action_dim_;
  if (queries.rows() != d) {
    throw InvalidInputError("knn query dimensions do not match the replay buffer");
  }
  if (scaler.inv_std.size() != d) throw InvalidInputError("scaler does not match the buffer");
  std::vector<char> skip(size_, 0);
  std::size_t excluded = 0;
  for (auto e : exclude) {
    if (e < size_ && !skip[e]) {
      skip[e] = 1;
      ++excluded;
    }
  }
  if (k > size_ - excluded) {
    throw StateError("knn requested " + std::to_string(k) + " neighbours but only " +
                     std::to_string(size_ - excluded) + " candidates exist");
  }
  const auto n = static_cast<Eigen::Index>(size_);
  const Eigen::VectorXd w2 = scaler.inv_std.array().square().matrix();
  // Expanded form |x|^2 + |y|^2 - 2 x.y under the diagonal metric, in single
  // precision, as a prefilter; survivors are re-measured exactly below.
  // The last column carries |x|^2 alone to size the rounding tolerance.
  const Eigen::Index m = queries.cols();
  Eigen::MatrixXf wq = Eigen::MatrixXf::Zero(2 * d, m + 1);
  wq.topLeftCorner(d, m) = (-2.0 * (queries.array().colwise() * w2.array())).matrix().cast<float>();
  wq.bottomRows(d) = w2.cast<float>().replicate(1, m + 1);
  const Eigen::MatrixXf approx = screen_.leftCols(n).transpose() * wq;  // n x (queries + 1)
  const double xmax = n > 0 ? static_cast<double>(approx.col(m).maxCoeff()) : 0.0;
  const double inf = std::numeric_limits<double>::infinity();

  auto exact = [&](std::size_t i, Eigen::Index j) {
    const auto col = static_cast<Eigen::Index>(i);
    double d2 = 0.0;
    for (int r = 0; r < d; ++r) {
      const double diff = (x_(r, col) - queries(r, j)) * scaler.inv_std[r];
      d2 += diff * diff;
    }
    return d2;
  };
  auto closer = [](const Neighbour& x, const Neighbour& y) {
    return x.distance < y.distance || (x.distance == y.distance && x.index < y.index);
  };

  std::vector<std::vector<Neighbour>> out;
  out.reserve(static_cast<std::size_t>(queries.cols()));
  std::vector<double> heap;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double yn = w2.dot(queries.col(j).array().square().matrix());
    // Covers single-precision rounding of the prefilter sums.
    const double tol = 1e-5 * (1.0 + xmax + yn);
    Eigen::VectorXd col = approx.col(j).cast<double>().array() + yn;
    for (std::size_t i = 0; i < size_; ++i) {
      if (skip[i]) col[static_cast<Eigen::Index>(i)] = inf;
    }
    // k-th smallest approximate distance via a bounded max-heap.
    heap.assign(col.data(), col.data() + std::min<Eigen::Index>(static_cast<Eigen::Index>(k), n));
    std::make_heap(heap.begin(), heap.end());
    const double* v = col.data();
    for (Eigen::Index i = static_cast<Eigen::Index>(k); i < n; ++i) {
      if (v[i] < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = v[i];
        std::push_heap(heap.begin(), heap.end());
      }
    }
    const double cutoff = (k == 0 ? -tol : heap.front()) + 2.0 * tol;
    std::vector<Neighbour> cand;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (v[i] <= cutoff) cand.push_back({static_cast<std::size_t>(i), exact(static_cast<std::size_t>(i), j)});
    }
    std::sort(cand.begin(), cand.end(), closer);
    cand.resize(k);
    for (auto& nb : cand) nb.distance = std::sqrt(nb.distance);
    out.push_back(std::move(cand));
  }
  return out;
}

void ReplayBuffer::write_csv(std::ostream& out) const {
  for (int i = 0; i < state_dim_; ++i) out << "s" << i << ',';
  for (int i = 0; i < action_dim_; ++i) out << "a" << i << ',';
  out << "r,c,";
  for (int i = 0; i < state_dim_; ++i) out << "s_next" << i << ',';
  out << "terminal\n";
  const auto old_prec = out.precision(17);
  const std::size_t start = size_ < capacity_ ? 0 : cursor_;
  for (std::size_t k = 0; k < size_; ++k) {
    const auto j = static_cast<Eigen::Index>((start + k) % capacity_);
    for (int i = 0; i < state_dim_ + action_dim_; ++i) out << x_(i, j) << ',';
    out << r_[j] << ',' << c_[j] << ',';
    for (int i = 0; i < state_dim_; ++i) out << s_next_(i, j) << ',';
    out << (terminal_[j] != 0.0 ? 1 : 0) << '\n';
  }
  out.precision(old_prec);
}

}  // namespace usc

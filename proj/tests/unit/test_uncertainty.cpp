#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "usc/errors.hpp"
#include "usc/uncertainty.hpp"

using namespace usc;

namespace {

NetworkParameters small_critic(std::uint64_t seed) {
  Rng rng(seed);
  return NetworkParameters::initialized(
      NetworkSpec::mlp(3, {5}, 1, Activation::tanh, Activation::identity), rng);
}

NetworkParameters constant_net(double value) {
  NetworkParameters p(NetworkSpec{{3, 1}, {Activation::identity}});
  p.bias(0)[0] = value;
  return p;
}

}  // namespace

TEST_CASE("Gauss-Newton matrix equals the sum of outer products plus damping") {
  Rng rng(1);
  std::normal_distribution<double> g(0, 1);
  std::vector<GradientRecord> grads(4, GradientRecord(3));
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Identity(3, 3) * 0.1;
  for (auto& v : grads) {
    for (int i = 0; i < 3; ++i) v[i] = g(rng);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) oracle(r, c) += v[r] * v[c];
  }
  const Eigen::MatrixXd m = gauss_newton_matrix(grads, 0.1);
  CHECK((m - oracle).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::MatrixXd cols(3, 4);
  for (int j = 0; j < 4; ++j) cols.col(j) = grads[static_cast<std::size_t>(j)];
  CHECK((gauss_newton_matrix(cols, 0.1) - oracle).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(gauss_newton_matrix(std::span<const GradientRecord>{}, 0.1));
}

TEST_CASE("influence: unit gradient with unit damping") {
  GradientRecord g(2);
  g << 1, 0;
  const std::vector<GradientRecord> grads{g};
  const Eigen::MatrixXd m = gauss_newton_matrix(grads, 1.0);
  CHECK(influence(g, m) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(influence(g, m) >= 0.0);
}

TEST_CASE("influence decreases when the query is duplicated in the batch") {
  Rng rng(2);
  std::normal_distribution<double> g(0, 1);
  GradientRecord q(4);
  for (int i = 0; i < 4; ++i) q[i] = g(rng);
  std::vector<GradientRecord> grads{q};
  for (int k = 0; k < 3; ++k) {
    GradientRecord v(4);
    for (int i = 0; i < 4; ++i) v[i] = g(rng);
    grads.push_back(v);
  }
  const double once = influence(q, gauss_newton_matrix(grads, 1e-3));
  grads.push_back(q);
  const double twice = influence(q, gauss_newton_matrix(grads, 1e-3));
  CHECK(twice < once);
}

TEST_CASE("influence_batch agrees with per-query solves") {
  Rng rng(3);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd grads(5, 8), queries(5, 3);
  for (Eigen::Index i = 0; i < grads.size(); ++i) grads.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < queries.size(); ++i) queries.data()[i] = g(rng);
  const Eigen::MatrixXd m = gauss_newton_matrix(grads, 1e-2);
  const Eigen::VectorXd batch = influence_batch(queries, m);
  for (int j = 0; j < 3; ++j) {
    const GradientRecord q = queries.col(j);
    CHECK(batch[j] == doctest::Approx(influence(q, m)).epsilon(1e-12));
  }
}

TEST_CASE("GramInfluence matches the dense parameter-space computation") {
  const NetworkParameters critic = small_critic(4);
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd ref(3, 6), query(3, 4);
  for (Eigen::Index i = 0; i < ref.size(); ++i) ref.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < query.size(); ++i) query.data()[i] = u(rng);
  for (double damping : {1e-2, 1.0}) {
    for (InfluenceScope scope : {InfluenceScope::full_parameters, InfluenceScope::last_layer}) {
      InfluenceConfig cfg;
      cfg.damping = damping;
      cfg.scope = scope;
      const GramInfluence gi(critic, ref, cfg);
      const Eigen::MatrixXd g_ref = per_sample_gradients(critic, ref, 0, scope);
      const Eigen::MatrixXd dense = gauss_newton_matrix(g_ref, damping);
      const Eigen::VectorXd rs = gi.reference_scores();
      const Eigen::VectorXd oracle_ref = influence_batch(g_ref, dense);
      for (int i = 0; i < 6; ++i) CHECK(rs[i] == doctest::Approx(oracle_ref[i]).epsilon(1e-8));
      const Eigen::VectorXd qs = gi.score(query);
      const Eigen::VectorXd oracle_q =
          influence_batch(per_sample_gradients(critic, query, 0, scope), dense);
      for (int i = 0; i < 4; ++i) CHECK(qs[i] == doctest::Approx(oracle_q[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("GramInfluence reads only its frozen snapshot") {
  NetworkParameters critic = small_critic(6);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Random(3, 5);
  const GramInfluence gi(critic, ref, InfluenceConfig{});
  const Eigen::VectorXd before = gi.reference_scores();
  critic.flat().setConstant(3.0);
  CHECK(gi.reference_scores() == before);
}

TEST_CASE("adjust_weight examples") {
  CHECK(adjust_weight(0.0, 1.0, 0.0) == 0.0);
  CHECK(adjust_weight(1.0, -1.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(adjust_weight(1.0, 1.0, 0.0) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  CHECK(adjust_weight(1.0, 0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(adjust_weight(-0.1, 0.0, 0.0), InvalidInputError);
  const UncertaintyScore s = score_sample(1.0, 2.0, 0.0);
  CHECK(s.above_mean);
  CHECK(s.weight == adjust_weight(1.0, 2.0, 0.0));
}

TEST_CASE("select_top_uncertain: sort oracle and ties") {
  Rng rng(7);
  std::uniform_int_distribution<int> d(0, 9);
  for (int c = 0; c < 200; ++c) {
    std::vector<std::pair<std::size_t, double>> scores;
    for (std::size_t i = 0; i < 20; ++i) scores.emplace_back(i * 3, 0.1 * d(rng));
    auto oracle = scores;
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const auto top = select_top_uncertain(scores, 6);
    REQUIRE(top.size() == 6);
    for (std::size_t k = 0; k < 6; ++k) CHECK(top[k] == oracle[k].first);
  }
  const std::vector<std::pair<std::size_t, double>> tied{{5, 1.0}, {2, 1.0}, {9, 0.5}};
  const auto t = select_top_uncertain(tied, 2);
  CHECK(t == std::vector<std::size_t>{2, 5});
  CHECK_THROWS_AS(select_top_uncertain(tied, 4), StateError);
}

TEST_CASE("interpolate_cost examples") {
  const std::vector<double> dist{1, 2, 4};
  const std::vector<double> cost{0, 1, 2};
  const InterpolatedTarget t = interpolate_cost(dist, cost);
  CHECK(t.weights[0] == doctest::Approx(4.0 / 7).epsilon(1e-15));
  CHECK(t.weights[1] == doctest::Approx(2.0 / 7).epsilon(1e-15));
  CHECK(t.weights[2] == doctest::Approx(1.0 / 7).epsilon(1e-15));
  CHECK(t.target == doctest::Approx(4.0 / 7).epsilon(1e-15));

  const std::vector<double> exact{0.5, 0.0, 2.0};
  CHECK(interpolate_cost(exact, cost).target == 1.0);
  const std::vector<double> none;
  CHECK_THROWS_AS(interpolate_cost(none, none), InvalidInputError);
}

TEST_CASE("interpolated targets stay inside the neighbour cost range") {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int c = 0; c < 1000; ++c) {
    std::vector<double> dist(5), cost(5);
    for (int i = 0; i < 5; ++i) {
      dist[static_cast<std::size_t>(i)] = u(rng);
      cost[static_cast<std::size_t>(i)] = u(rng);
    }
    const InterpolatedTarget t = interpolate_cost(dist, cost);
    CHECK(t.target >= *std::min_element(cost.begin(), cost.end()) - 1e-12);
    CHECK(t.target <= *std::max_element(cost.begin(), cost.end()) + 1e-12);
    CHECK(std::accumulate(t.weights.begin(), t.weights.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("refine_loss examples") {
  const Eigen::MatrixXd anchor = Eigen::MatrixXd::Zero(3, 1);
  const std::vector<double> zero{0.0};
  const RefineLoss a = refine_loss(constant_net(1.0), constant_net(1.0), anchor, zero, 1.0, 0.01);
  CHECK(a.loss == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a.trust_hits == 0);

  // Divergence 1 over a zero threshold with a target hit exactly.
  const std::vector<double> one{1.0};
  const RefineLoss b =
      refine_loss(constant_net(1.0), constant_net(1.0 - std::sqrt(2.0)), anchor, one, 1.0, 0.0);
  CHECK(b.loss == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(b.trust_hits == 1);

  const Eigen::MatrixXd empty(3, 0);
  const std::vector<double> no_targets;
  CHECK_THROWS_AS(refine_loss(constant_net(0), constant_net(0), empty, no_targets, 1.0, 0.01),
                  InvalidInputError);
}

TEST_CASE("refine gradient matches finite differences") {
  NetworkParameters critic = small_critic(9);
  const NetworkParameters frozen = small_critic(10);
  const Eigen::MatrixXd anchors = Eigen::MatrixXd::Random(3, 4);
  const std::vector<double> targets{0.1, -0.2, 0.3, 0.0};
  const RefineLoss r = refine_loss(critic, frozen, anchors, targets, 2.0, 0.01);
  for (Eigen::Index i = 0; i < r.grad.size(); ++i) {
    const double keep = critic.flat()[i];
    critic.flat()[i] = keep + 1e-6;
    const double up = refine_loss(critic, frozen, anchors, targets, 2.0, 0.01).loss;
    critic.flat()[i] = keep - 1e-6;
    const double down = refine_loss(critic, frozen, anchors, targets, 2.0, 0.01).loss;
    critic.flat()[i] = keep;
    CHECK(std::abs((up - down) / 2e-6 - r.grad[i]) < 1e-7);
  }
}

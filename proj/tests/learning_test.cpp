#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "topospn/learning.hpp"
#include "topospn/spn.hpp"

namespace topospn {
namespace {

using testing::RandomNetworkFactory;
using testing::relative_error;

SpnNetwork one_variable_mixture() {
  NetworkBuilder b(uniform_variables(1, 2));
  return std::move(b).build(b.sum({b.indicator(0, 0), b.indicator(0, 1)}, {0.3, 0.7}));
}

Evidence observed(const SpnNetwork& net, std::vector<std::uint32_t> x) {
  return evidence_from_assignment(net.variables(), x);
}

// Two components over six binary variables; leaf weights start skewed so the
// components are distinguishable from the first E-step.
SpnNetwork two_component_mixture() {
  NetworkBuilder b(uniform_variables(6, 2));
  std::vector<NodeId> comps;
  for (int c = 0; c < 2; ++c) {
    std::vector<NodeId> leaves;
    for (VarId v = 0; v < 6; ++v) {
      const double p1 = c == 0 ? 0.6 : 0.4;
      leaves.push_back(b.sum({b.indicator(v, 0), b.indicator(v, 1)}, {1 - p1, p1}));
    }
    comps.push_back(b.product(leaves));
  }
  return std::move(b).build(b.sum(comps, {0.5, 0.5}));
}

std::vector<Evidence> mixture_samples(const SpnNetwork& net, std::size_t n, double weight0, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Evidence> data;
  for (std::size_t i = 0; i < n; ++i) {
    const bool first = rng.bernoulli(weight0);
    std::vector<std::uint32_t> x(6);
    for (auto& xi : x) xi = rng.bernoulli(first ? 0.85 : 0.15) ? 1 : 0;
    data.push_back(observed(net, x));
  }
  return data;
}

TEST(LogLikelihood, SingleSampleAndAdditivity) {
  const auto net = one_variable_mixture();
  const std::vector<Evidence> one{observed(net, {1})};
  EXPECT_NEAR(log_likelihood(net, one), std::log(0.7), 1e-15);
  const std::vector<Evidence> two{observed(net, {1}), observed(net, {0})};
  const std::vector<Evidence> doubled{two[0], two[1], two[0], two[1]};
  EXPECT_EQ(log_likelihood(net, doubled), 2 * log_likelihood(net, two));
  EXPECT_THROW(log_likelihood(net, std::vector<Evidence>{}), Error);
}

TEST(LogLikelihood, MatchesEnumerationNormalizedLikelihood) {
  RandomNetworkFactory factory(21);
  for (int i = 0; i < 20; ++i) {
    const auto net = factory.make(4, 3);  // weights deliberately unnormalized
    double z = 0.0;
    testing::for_each_assignment(net.variables(),
                                 [&](const std::vector<std::uint32_t>& x) { z += testing::joint_value(net, x); });
    std::vector<Evidence> data;
    double want = 0.0;
    for (int k = 0; k < 6; ++k) {
      auto e = testing::random_evidence(factory.rng(), net.variables(), 0.6, 0.0);
      const double s = testing::enumerate_evidence(net, e);
      if (s == 0.0) continue;
      want += std::log(s / z);
      data.push_back(std::move(e));
    }
    if (data.empty()) continue;
    EXPECT_LT(relative_error(log_likelihood(net, data), want), 1e-9);
  }
}

TEST(GradientEpoch, WeightOfObservedChildIncreases) {
  auto net = one_variable_mixture();
  const std::vector<Evidence> data(5, observed(net, {0}));
  TrainConfig cfg;
  cfg.method = TrainMethod::Gradient;
  const double before = net.weights(0)[0];
  gradient_epoch(net, data, cfg);
  EXPECT_GT(net.weights(0)[0], before);
  EXPECT_NEAR(net.weights(0)[0] + net.weights(0)[1], 1.0, 1e-12);
}

TEST(GradientEpoch, SharedWeightsStayTied) {
  NetworkBuilder b(uniform_variables(2, 2));
  const WeightSetId set = b.add_weight_set({0.5, 0.5});
  const NodeId s0 = b.shared_sum({b.indicator(0, 0), b.indicator(0, 1)}, set);
  const NodeId s1 = b.shared_sum({b.indicator(1, 0), b.indicator(1, 1)}, set);
  auto net = std::move(b).build(b.product({s0, s1}));
  const std::vector<Evidence> data{observed(net, {0, 0}), observed(net, {0, 1}), observed(net, {0, 0})};
  TrainConfig cfg;
  cfg.method = TrainMethod::Gradient;
  for (int e = 0; e < 3; ++e) {
    gradient_epoch(net, data, cfg);
    ASSERT_EQ(net.share_groups()[set].size(), 2U);
    EXPECT_EQ(net.weight_set(s0), net.weight_set(s1));
  }
  // Pooled counts: value 0 seen 4 times out of 6.
  EXPECT_GT(net.weights(set)[0], 0.5);
}

TEST(Gradient, MatchesFiniteDifferencesOfLogLikelihood) {
  RandomNetworkFactory factory(22);
  int nets = 0;
  for (int i = 0; nets < 25 && i < 200; ++i) {
    auto net = factory.make(3, 3);
    for (WeightSetId s = 0; s < net.num_weight_sets(); ++s)
      for (double& w : net.mutable_weights(s)) w = factory.rng().uniform(0.1, 1.0);
    std::vector<Evidence> data;
    for (int k = 0; k < 5; ++k) data.push_back(testing::random_evidence(factory.rng(), net.variables(), 0.7, 0.0));
    bool possible = true;
    for (const auto& e : data) possible = possible && std::isfinite(log_value(net, e));
    if (!possible) continue;
    ++nets;
    const auto grad = log_likelihood_gradient(net, data);
    for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
      for (std::size_t j = 0; j < net.weights(s).size(); ++j) {
        const double h = 1e-6, w0 = net.weights(s)[j];
        net.mutable_weights(s)[j] = w0 + h;
        const double up = log_likelihood(net, data);
        net.mutable_weights(s)[j] = w0 - h;
        const double down = log_likelihood(net, data);
        net.mutable_weights(s)[j] = w0;
        const double fd = (up - down) / (2 * h);
        if (std::abs(fd) < 1e-7 && std::abs(grad[s][j]) < 1e-7) continue;
        EXPECT_LT(relative_error(grad[s][j], fd), 1e-5) << "net " << i << " set " << s << " edge " << j;
      }
    }
  }
  EXPECT_EQ(nets, 25);
}

TEST(HardEm, RecoversMixtureWeights) {
  auto net = two_component_mixture();
  const auto data = mixture_samples(net, 2000, 0.8, 5);
  TrainConfig cfg;
  cfg.epochs = 20;
  const auto curve = train(net, data, cfg);
  const auto root = net.weights(net.weight_set(net.root()));
  EXPECT_NEAR(root[0], 0.8, 0.05);
  EXPECT_NEAR(root[1], 0.2, 0.05);
  for (std::size_t e = 2; e < curve.train.size(); ++e) EXPECT_GE(curve.train[e], curve.train[e - 1] - 1e-3);
}

TEST(HardEm, UnselectedChildGetsExactlyZeroWithoutSmoothing) {
  auto net = one_variable_mixture();
  const std::vector<Evidence> data(4, observed(net, {1}));
  TrainConfig cfg;
  cfg.smoothing = 0.0;
  hard_em_epoch(net, data, cfg);
  EXPECT_EQ(net.weights(0)[0], 0.0);
  EXPECT_EQ(net.weights(0)[1], 1.0);
}

TEST(HardEm, SingleChildSumKeepsUnitWeight) {
  NetworkBuilder b(uniform_variables(1, 2));
  const NodeId inner = b.sum({b.indicator(0, 0), b.indicator(0, 1)}, {0.5, 0.5});
  auto net = std::move(b).build(b.sum({inner}, {1.0}));
  const std::vector<Evidence> data{observed(net, {0}), observed(net, {1})};
  hard_em_epoch(net, data, TrainConfig{});
  EXPECT_EQ(net.weights(net.weight_set(net.root()))[0], 1.0);
}

TEST(HardEm, CountsOneChildPerSumOnSelectedCircuit) {
  RandomNetworkFactory factory(23);
  for (int i = 0; i < 30; ++i) {
    const auto net = factory.make(5, 3);
    const auto e = testing::random_evidence(factory.rng(), net.variables(), 0.5, 0.0);
    if (testing::enumerate_evidence(net, e) == 0.0) continue;
    const auto counts = hard_em_counts(net, e);
    // Sum nodes on the selected circuit, found independently by a tree walk.
    const auto mv = max_pass(net, e);
    std::vector<int> visits(net.num_nodes(), 0);
    std::vector<NodeId> stack{net.root()};
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      ++visits[n];
      if (net.kind(n) == NodeKind::Product)
        for (NodeId c : net.children(n)) stack.push_back(c);
      if (net.kind(n) == NodeKind::Sum) stack.push_back(net.children(n)[detail::argmax_child(net, n, mv)]);
    }
    for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
      double expected = 0.0;
      for (NodeId n : net.share_groups()[s]) expected += visits[n];
      const double got = std::accumulate(counts[s].begin(), counts[s].end(), 0.0);
      EXPECT_EQ(got, expected);
      for (double c : counts[s]) EXPECT_TRUE(c == 0.0 || c >= 1.0);
    }
  }
}

TEST(OnlineHardEm, RecoversMixtureWeights) {
  auto net = two_component_mixture();
  const auto data = mixture_samples(net, 2000, 0.8, 6);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 50;
  train(net, data, cfg);
  const auto root = net.weights(net.weight_set(net.root()));
  EXPECT_NEAR(root[0], 0.8, 0.05);
}

TEST(OnlineHardEm, CountTableTracksCurrentCircuits) {
  // With one sample, re-running the epoch must not accumulate stale counts.
  auto net = one_variable_mixture();
  const std::vector<Evidence> data{observed(net, {1})};
  TrainConfig cfg;
  cfg.smoothing = 1.0;
  cfg.batch_size = 1;
  OnlineHardEm em(net, data.size());
  for (int e = 0; e < 5; ++e) em.epoch(net, data, cfg, e);
  EXPECT_DOUBLE_EQ(net.weights(0)[1], 2.0 / 3.0);
  EXPECT_THROW(em.epoch(net, std::vector<Evidence>(2, data[0]), cfg, 0), Error);
}

TEST(OnlineHardEm, SeparatesClustersFromNearUniformStart) {
  // Full-batch hard EM sends every sample down the same circuit here.
  NetworkBuilder b(uniform_variables(4, 2));
  std::vector<NodeId> comps;
  for (int c = 0; c < 2; ++c) {
    std::vector<NodeId> leaves;
    for (VarId v = 0; v < 4; ++v) leaves.push_back(b.sum({b.indicator(v, 0), b.indicator(v, 1)}, {0.5, 0.5}));
    comps.push_back(b.product(leaves));
  }
  auto net = std::move(b).build(b.sum(comps, {0.5, 0.5}));
  std::vector<Evidence> data;
  for (int i = 0; i < 40; ++i) data.push_back(observed(net, std::vector<std::uint32_t>(4, i % 2)));
  auto batch = net;
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.smoothing = 0.1;
  const auto full = train(batch, data, cfg);
  cfg.batch_size = 1;
  const auto online = train(net, data, cfg);
  EXPECT_GT(online.train.back(), full.train.back() + 1.0);
  EXPECT_NEAR(online.train.back(), std::log(0.5), 0.2);
}

TEST(Train, SingleEpochEqualsDirectCall) {
  auto a = two_component_mixture();
  auto b = two_component_mixture();
  const auto data = mixture_samples(a, 200, 0.7, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto curve = train(a, data, cfg);
  const double ll = hard_em_epoch(b, data, cfg);
  ASSERT_EQ(curve.train.size(), 1U);
  EXPECT_EQ(curve.train[0], ll);
  EXPECT_EQ(a.weight_sets(), b.weight_sets());
}

TEST(Train, DeterministicUnderEqualSeeds) {
  for (auto [method, batch] : {std::pair{TrainMethod::Gradient, 0}, {TrainMethod::HardEM, 0},
                               {TrainMethod::Gradient, 16}, {TrainMethod::HardEM, 16}}) {
    auto a = two_component_mixture();
    auto b = two_component_mixture();
    initialize_weights(a, 99);
    initialize_weights(b, 99);
    const auto data = mixture_samples(a, 100, 0.6, 2);
    TrainConfig cfg;
    cfg.method = method;
    cfg.batch_size = static_cast<std::size_t>(batch);
    cfg.epochs = 4;
    const auto ca = train(a, data, cfg, data);
    const auto cb = train(b, data, cfg, data);
    EXPECT_EQ(curve_to_csv(ca), curve_to_csv(cb));
    EXPECT_EQ(ca.train, cb.train);
    EXPECT_EQ(a.weight_sets(), b.weight_sets());
  }
}

TEST(Train, WeightsStayNormalizedAndNonNegative) {
  RandomNetworkFactory factory(24);
  for (int i = 0; i < 10; ++i) {
    auto net = factory.make(5, 4);
    normalize_weights(net);
    std::vector<Evidence> data;
    for (int k = 0; k < 20; ++k) data.push_back(testing::random_evidence(factory.rng(), net.variables(), 0.6, 0.0));
    bool possible = true;
    for (const auto& e : data) possible = possible && std::isfinite(log_value(net, e));
    if (!possible) continue;
    for (auto [method, batch] : {std::pair{TrainMethod::Gradient, 0}, {TrainMethod::HardEM, 0}, {TrainMethod::HardEM, 3}}) {
      auto copy = net;
      TrainConfig cfg;
      cfg.method = method;
      cfg.batch_size = static_cast<std::size_t>(batch);
      cfg.epochs = 3;
      train(copy, data, cfg);
      for (WeightSetId s = 0; s < copy.num_weight_sets(); ++s) {
        const auto w = copy.weights(s);
        for (double x : w) EXPECT_GE(x, 0.0);
        EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
      }
    }
  }
}

TEST(Train, CurveCsvLayout) {
  LikelihoodCurve c{{-1.5, -1.25}, {}};
  EXPECT_EQ(curve_to_csv(c), "epoch,mean_log_likelihood\n1,-1.5\n2,-1.25\n");
  c.validation = {-2.0, -1.75};
  EXPECT_EQ(curve_to_csv(c), "epoch,mean_log_likelihood,val_log_likelihood\n1,-1.5,-2\n2,-1.25,-1.75\n");
}

TEST(Prune, NoZeroWeightsLeavesNetworkIdentical) {
  auto net = two_component_mixture();
  const auto pruned = prune_zero_weights(net, 0.0);
  EXPECT_EQ(pruned.num_nodes(), net.num_nodes());
  EXPECT_EQ(pruned.weight_sets(), net.weight_sets());
}

TEST(Prune, ZeroEdgeIsRemovedWithoutChangingValues) {
  NetworkBuilder b(uniform_variables(2, 2));
  const NodeId a0 = b.sum({b.indicator(0, 0), b.indicator(0, 1)}, {0.2, 0.8});
  const NodeId a1 = b.sum({b.indicator(1, 0), b.indicator(1, 1)}, {0.6, 0.4});
  const NodeId c0 = b.sum({b.indicator(0, 1)}, {1.0});
  const NodeId c1 = b.sum({b.indicator(1, 1)}, {1.0});
  const NodeId p = b.product({a0, a1});
  const NodeId q = b.product({c0, c1});
  const auto net = std::move(b).build(b.sum({p, q}, {1.0, 0.0}));
  const auto pruned = prune_zero_weights(net, 0.0);
  EXPECT_LT(pruned.num_nodes(), net.num_nodes());
  EXPECT_TRUE(pruned.is_valid());
  testing::for_each_assignment(net.variables(), [&](const std::vector<std::uint32_t>& x) {
    EXPECT_EQ(testing::joint_value(pruned, x), testing::joint_value(net, x));
  });
}

TEST(Prune, AllZeroChildrenWouldOrphan) {
  NetworkBuilder b(uniform_variables(1, 2));
  const auto net = std::move(b).build(b.sum({b.indicator(0, 0), b.indicator(0, 1)}, {0.0, 0.0}));
  try {
    prune_zero_weights(net, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WouldOrphanRoot);
  }
}

}  // namespace
}  // namespace topospn

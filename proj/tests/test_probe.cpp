#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "mrmbench/probe.hpp"

namespace mrmbench {
namespace {

double max_fd_error(std::mt19937_64& rng) {
  const std::size_t d = 1 + rng() % 8, k = 1 + rng() % 4, n = 1 + rng() % 16;
  auto reps = testing::random_matrix(n, d, rng(), 2.0);
  std::vector<Label> labels(n);
  for (auto& l : labels) l = static_cast<Label>(rng() % k);
  auto model = init_probe(d, k);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& w : model.weights) w = g(rng);

  const auto lg = loss_and_grad(model, reps, labels);
  EXPECT_NEAR(lg.loss, static_cast<double>(oracle::softmax_loss(model.weights, d, k, reps, labels)), 1e-12);
  return oracle::max_relative_error(lg.grad, oracle::fd_gradient(model.weights, d, k, reps, labels));
}

TEST(Probe, InitIsZero) {
  const auto m = init_probe(4, 2);
  EXPECT_EQ(m.weights, std::vector<double>(8, 0.0));
  EXPECT_THROW(init_probe(0, 2), Error);
  EXPECT_THROW(init_probe(2, 0), Error);
}

TEST(Probe, InitialLossIsLogK) {
  for (std::size_t k : {2u, 3u}) {
    auto reps = testing::random_matrix(10, 5, 3);
    std::vector<Label> labels(10);
    for (std::size_t i = 0; i < 10; ++i) labels[i] = static_cast<Label>(i % k);
    const auto lg = loss_and_grad(init_probe(5, k), reps, labels);
    EXPECT_NEAR(lg.loss, std::log(static_cast<double>(k)), 1e-12);
  }
  EXPECT_NEAR(std::log(2.0), 0.693147, 1e-6);
  EXPECT_NEAR(std::log(3.0), 1.098612, 1e-6);
}

TEST(Probe, ZeroWeightGradientIsMeanOuterProduct) {
  auto reps = testing::random_matrix(6, 3, 8);
  std::vector<Label> labels{0, 1, 1, 0, 1, 1};
  const auto lg = loss_and_grad(init_probe(3, 2), reps, labels);
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (std::size_t i = 0; i < 6; ++i) expect += reps(i, f) * (0.5 - (labels[i] == c ? 1.0 : 0.0));
      EXPECT_NEAR(lg.grad[f * 2 + c], expect / 6.0, 1e-15);
    }
}

TEST(Probe, SymbolicTwoByTwoGradient) {
  RepresentationMatrix h(1, 2, {1.0f, 0.0f});
  const std::vector<Label> label{0};
  // W = 0: p = (1/2, 1/2), dL/dW[f][c] = h_f (p_c - y_c).
  auto lg = loss_and_grad(init_probe(2, 2), h, label);
  EXPECT_EQ(lg.grad, (std::vector<double>{-0.5, 0.5, 0.0, 0.0}));
  // W[0][0] = 1: logits (1, 0), p_0 = e / (e + 1).
  auto m = init_probe(2, 2);
  m.w(0, 0) = 1.0;
  lg = loss_and_grad(m, h, label);
  const double p0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
  EXPECT_NEAR(lg.loss, -std::log(p0), 1e-15);
  EXPECT_NEAR(lg.grad[0], p0 - 1.0, 1e-15);
  EXPECT_NEAR(lg.grad[1], 1.0 - p0, 1e-15);
  EXPECT_EQ(lg.grad[2], 0.0);
  EXPECT_EQ(lg.grad[3], 0.0);
}

TEST(Probe, GradientMatchesFiniteDifferencesProperty) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 30; ++trial) EXPECT_LT(max_fd_error(rng), 1e-5);
}

TEST(Probe, LossRejectsBadInput) {
  auto reps = testing::random_matrix(2, 2, 1);
  EXPECT_THROW(loss_and_grad(init_probe(3, 2), reps, std::vector<Label>{0, 1}), Error);
  EXPECT_THROW(loss_and_grad(init_probe(2, 2), reps, std::vector<Label>{0, 2}), Error);
  reps(0, 0) = std::nanf("");
  try {
    loss_and_grad(init_probe(2, 2), reps, std::vector<Label>{0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite);
  }
}

TEST(Probe, SeparableGaussiansAreLearnedInOneEpoch) {
  const auto train = testing::two_gaussians(512, 4, 5.0, 0.1, 1);
  const auto held = testing::two_gaussians(128, 4, 5.0, 0.1, 2);
  TrainConfig cfg;
  const auto run = train_epoch(init_probe(4, 2), train.reps, train.labels, 5e-5, cfg);
  EXPECT_EQ(run.trace.size(), 4u);  // 512 / 128
  EXPECT_GE(evaluate(run.model, held.reps, held.labels), 0.99);
}

TEST(Probe, ZeroLearningRateLeavesModelUnchanged) {
  const auto train = testing::two_gaussians(300, 3, 1.0, 1.0, 4);
  TrainConfig cfg;
  const auto run = train_epoch(init_probe(3, 3), train.reps, train.labels, 0.0, cfg);
  EXPECT_EQ(run.model.weights, std::vector<double>(9, 0.0));
  ASSERT_EQ(run.trace.size(), 3u);  // 128 + 128 + 44
  for (double l : run.trace) EXPECT_NEAR(l, std::log(3.0), 1e-12);
}

TEST(Probe, FullBatchSgdLossIsNonIncreasing) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto train = testing::two_gaussians(64, 6, 0.5, 1.0, seed);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::sgd;
    cfg.batch_size = 64;
    cfg.epochs = 200;
    const auto run = train_epoch(init_probe(6, 2), train.reps, train.labels, 1e-5, cfg);
    ASSERT_EQ(run.trace.size(), 200u);
    for (std::size_t i = 1; i < run.trace.size(); ++i) EXPECT_LE(run.trace[i], run.trace[i - 1]);
    EXPECT_LT(run.trace.back(), run.trace.front());
  }
}

TEST(Probe, TrainingIsBitReproducible) {
  const auto train = testing::two_gaussians(333, 5, 0.3, 1.0, 9);
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto a = train_epoch(init_probe(5, 2), train.reps, train.labels, 2e-5, cfg);
  const auto b = train_epoch(init_probe(5, 2), train.reps, train.labels, 2e-5, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.trace, b.trace);
  cfg.seed = 18;
  const auto c = train_epoch(init_probe(5, 2), train.reps, train.labels, 2e-5, cfg);
  EXPECT_NE(a.trace, c.trace);
}

TEST(Probe, ChooseLrBreaksTiesTowardSmallest) {
  const std::vector<LrScore> tie{{5e-5, 0.70}, {2e-5, 0.80}, {1e-5, 0.80}};
  EXPECT_EQ(choose_lr(tie), 2u);
  const std::vector<LrScore> clear{{5e-5, 0.9}, {2e-5, 0.5}, {1e-5, 0.5}};
  EXPECT_EQ(choose_lr(clear), 0u);
}

TEST(Probe, SelectOnSeparableFixturePicksSmallestLr) {
  const auto train = testing::two_gaussians(512, 4, 5.0, 0.1, 1);
  const auto val = testing::two_gaussians(128, 4, 5.0, 0.1, 2);
  for (std::size_t workers : {1u, 3u}) {
    const auto sel = select_probe(train.reps, train.labels, val.reps, val.labels, 2, TrainConfig{}, workers);
    ASSERT_EQ(sel.scores.size(), 3u);
    for (const auto& s : sel.scores) EXPECT_GE(s.accuracy, 0.99);
    EXPECT_EQ(sel.model.lr, 1e-5);
  }
}

TEST(Probe, PredictZeroModelIsUniformWithLowestLabel) {
  auto reps = testing::random_matrix(5, 3, 2);
  const auto p = predict(init_probe(3, 4), reps);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(p.labels[i], 0u);
    for (double v : p.row(i, 4)) EXPECT_DOUBLE_EQ(v, 0.25);
  }
}

TEST(Probe, PredictSoftmaxOracle) {
  // h = (1, 0), logits = (3, 1).
  auto m = init_probe(2, 2);
  m.w(0, 0) = 3.0;
  m.w(0, 1) = 1.0;
  const auto p = predict(m, RepresentationMatrix(1, 2, {1.0f, 0.0f}));
  const double e3 = std::exp(3.0), e1 = std::exp(1.0);
  EXPECT_NEAR(p.probabilities[0], e3 / (e3 + e1), 1e-15);
  EXPECT_NEAR(p.probabilities[0], 0.880797, 1e-6);
  EXPECT_NEAR(p.probabilities[1], 0.119203, 1e-6);
  EXPECT_EQ(p.labels[0], 0u);
}

TEST(Probe, ProbabilitiesAreDistributionsAndShiftInvariantProperty) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t d = 1 + rng() % 8, k = 1 + rng() % 5;
    auto m = init_probe(d + 1, k);
    for (auto& w : m.weights) w = g(rng);
    auto reps = testing::random_matrix(20, d + 1, rng(), 3.0);
    for (std::size_t i = 0; i < 20; ++i) reps(i, d) = 1.0f;  // constant feature
    const auto base = predict(m, reps);
    for (std::size_t i = 0; i < 20; ++i) {
      double sum = 0.0;
      for (double v : base.row(i, k)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
    // Adding c to the constant feature's weights shifts every logit by c.
    auto shifted = m;
    const double c = g(rng);
    for (std::size_t cls = 0; cls < k; ++cls) shifted.w(d, cls) += c;
    EXPECT_EQ(predict(shifted, reps).labels, base.labels);
  }
}

TEST(Probe, EvaluateCountsMatches) {
  auto m = init_probe(1, 2);
  m.w(0, 1) = 1.0;  // positive feature -> class 1, otherwise class 0 (tie)
  RepresentationMatrix reps(4, 1, {1.0f, 1.0f, -1.0f, 2.0f});
  EXPECT_DOUBLE_EQ(evaluate(m, reps, std::vector<Label>{1, 1, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(evaluate(m, reps, std::vector<Label>{1, 1, 0, 0}), 0.75);
  EXPECT_THROW(evaluate(m, reps, std::vector<Label>{}), Error);
}

TEST(Probe, ZeroModelAccuracyEqualsLabelZeroFraction) {
  std::mt19937_64 rng(6);
  auto reps = testing::random_matrix(101, 4, 7);
  std::vector<Label> labels(101);
  std::size_t zeros = 0;
  for (auto& l : labels) zeros += (l = static_cast<Label>(rng() % 2)) == 0;
  EXPECT_DOUBLE_EQ(evaluate(init_probe(4, 2), reps, labels), static_cast<double>(zeros) / 101.0);
}

TEST(Probe, JsonRoundTrip) {
  auto m = init_probe(3, 2);
  m.dimension = "verbosity";
  m.version = "easy";
  m.lr = 2e-5;
  m.seed = 17;
  m.weights = {0.1, -0.2, 1e-7, 3.0, -4.5, 0.333333333333};
  const auto j = to_json(m);
  for (const char* key : {"dimension", "version", "d", "k", "lr", "seed", "weights"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(probe_from_json(nlohmann::json::parse(j.dump())), m);
  auto bad = j;
  bad["weights"].erase(0);
  EXPECT_THROW(probe_from_json(bad), Error);
}

}  // namespace
}  // namespace mrmbench

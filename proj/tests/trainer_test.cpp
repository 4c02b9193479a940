// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#include "spikegrad/trainer.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace sg = spikegrad;

namespace {

sg::NetworkWeights<double> tiny_weights() {
  sg::NetworkWeights<double> w;
  w.w_in = sg::Tensor<double>::matrix({{1.0, 2.0}});
  w.w_rec = sg::Tensor<double>::matrix({{0.1, 0.2}, {0.3, 0.4}});
  w.w_out = sg::Tensor<double>::matrix({{1.0, -1.0}, {0.5, 0.5}});
  w.b_out = sg::Tensor<double>::vector({0.0, 0.0});
  return w;
}

sg::NetworkWeights<double> tiny_grads() {
  sg::NetworkWeights<double> g;
  g.w_in = sg::Tensor<double>::matrix({{0.5, -0.5}});
  g.w_rec = sg::Tensor<double>::full({2, 2}, 0.25);
  g.w_out = sg::Tensor<double>::full({2, 2}, -1.0);
  g.b_out = sg::Tensor<double>::vector({2.0, -2.0});
  return g;
}

std::array<const sg::Tensor<double>*, 4> grad_ptrs(const sg::NetworkWeights<double>& g) {
  return {&g.w_in, &g.w_rec, &g.w_out, &g.b_out};
}

sg::TrainConfig small_config() {
  sg::TrainConfig cfg;
  cfg.net.inputs = 28;  // overwritten by train from the data
  cfg.net.hidden = 16;
  cfg.net.classes = 2;
  cfg.net.shape = sg::SurrogateShape::gaussian();
  cfg.net.mech = sg::Mechanism::Inject;
  cfg.net.seed = 7;
  cfg.seq_len = 28;
  cfg.batch = 8;
  cfg.iters = 30;
  cfg.lr = 0.01;
  cfg.opt = sg::Optimizer::Adam;
  cfg.data_seed = 11;
  cfg.log_every = 0;
  return cfg;
}

TEST(Optim, SgdStepHandValues) {
  auto w = tiny_weights();
  auto g = tiny_grads();
  sg::sgd_step(w, grad_ptrs(g), 0.1);
  EXPECT_DOUBLE_EQ(w.w_in[0], 0.95);
  EXPECT_DOUBLE_EQ(w.w_in[1], 2.05);
  EXPECT_DOUBLE_EQ(w.w_rec[0], 0.1 - 0.1 * 0.25);
  EXPECT_DOUBLE_EQ(w.w_out[3], 0.5 + 0.1);
  EXPECT_DOUBLE_EQ(w.b_out[0], -0.2);
  EXPECT_DOUBLE_EQ(w.b_out[1], 0.2);
}

TEST(Optim, AdamFirstStepMovesByLrTimesSign) {
  auto w = tiny_weights();
  auto g = tiny_grads();
  auto before = w;
  auto st = sg::AdamState<double>::init(w);
  sg::adam_step(w, grad_ptrs(g), st, 0.1, 0.9, 0.999, 1e-8);
  EXPECT_EQ(st.step, 1u);
  // With zero moments the bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(w.w_in[0], before.w_in[0] - 0.1, 1e-8);
  EXPECT_NEAR(w.w_in[1], before.w_in[1] + 0.1, 1e-8);
  EXPECT_NEAR(w.b_out[0], before.b_out[0] - 0.1, 1e-8);
  EXPECT_NEAR(w.b_out[1], before.b_out[1] + 0.1, 1e-8);
  // Moment state holds (1-beta) scaled grads.
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(st.v[0][0], 0.001 * 0.25);
}

TEST(Optim, AdamSecondStepUsesAccumulatedMoments) {
  auto w = tiny_weights();
  auto g = tiny_grads();
  auto st = sg::AdamState<double>::init(w);
  sg::adam_step(w, grad_ptrs(g), st, 0.1, 0.9, 0.999, 1e-8);
  const double after_one = w.w_in[0];
  sg::adam_step(w, grad_ptrs(g), st, 0.1, 0.9, 0.999, 1e-8);
  EXPECT_EQ(st.step, 2u);
  // Constant gradient: bias correction keeps the step near lr * sign(g).
  EXPECT_NEAR(w.w_in[0], after_one - 0.1, 1e-8);
}

TEST(Train, LossFallsOnSyntheticData) {
  auto cfg = small_config();
  cfg.iters = 80;
  sg::Dataset ds = sg::synthetic_dataset(2, 64, 5);
  std::vector<sg::MetricsRow> rows;
  auto w = sg::train<double>(cfg, ds, &rows);
  ASSERT_EQ(rows.size(), cfg.iters);

  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += rows[i].loss;
    tail += rows[rows.size() - 1 - i].loss;
  }
  EXPECT_LT(tail, head) << "mean loss of last 5 iters should sit below the first 5";
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_GE(r.acc, 0.0);
    EXPECT_LE(r.acc, 1.0);
    EXPECT_GE(r.fwd_ms, 0.0);
    EXPECT_GE(r.bwd_ms, 0.0);
  }

  double acc = sg::evaluate(w, cfg.net, cfg.seq_len, ds);
  EXPECT_GT(acc, 0.75) << "trained net should beat chance on the block pattern";
}

TEST(Train, SameSeedsSameRun) {
  auto cfg = small_config();
  cfg.iters = 8;
  sg::Dataset ds = sg::synthetic_dataset(2, 32, 5);
  std::vector<sg::MetricsRow> a_rows, b_rows;
  auto a = sg::train<double>(cfg, ds, &a_rows);
  auto b = sg::train<double>(cfg, ds, &b_rows);
  ASSERT_EQ(a_rows.size(), b_rows.size());
  for (std::size_t i = 0; i < a_rows.size(); ++i) {
    EXPECT_EQ(a_rows[i].loss, b_rows[i].loss);
    EXPECT_EQ(a_rows[i].acc, b_rows[i].acc);
  }
  EXPECT_TRUE(a.w_in.bit_equal(b.w_in));
  EXPECT_TRUE(a.w_rec.bit_equal(b.w_rec));
  EXPECT_TRUE(a.w_out.bit_equal(b.w_out));
  EXPECT_TRUE(a.b_out.bit_equal(b.b_out));
}

TEST(Train, SgdAlsoLearns) {
  auto cfg = small_config();
  cfg.opt = sg::Optimizer::Sgd;
  cfg.lr = 0.05;
  sg::Dataset ds = sg::synthetic_dataset(2, 64, 5);
  std::vector<sg::MetricsRow> rows;
  sg::train<double>(cfg, ds, &rows);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += rows[i].loss;
    tail += rows[rows.size() - 1 - i].loss;
  }
  EXPECT_LT(tail, head);
}

TEST(Train, SinglePrecisionRuns) {
  auto cfg = small_config();
  cfg.iters = 4;
  sg::Dataset ds = sg::synthetic_dataset(2, 32, 5);
  std::vector<sg::MetricsRow> rows;
  auto w = sg::train<float>(cfg, ds, &rows);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_EQ(w.w_in.extent(0), 28u);
  EXPECT_EQ(w.w_in.extent(1), 16u);
}

TEST(Train, FusedReplayMatchesDynamicExactly) {
  auto cfg = small_config();
  cfg.iters = 10;
  sg::Dataset ds = sg::synthetic_dataset(2, 32, 5);

  std::vector<sg::MetricsRow> dyn_rows, fus_rows;
  cfg.mode = sg::GraphMode::Dynamic;
  auto dyn = sg::train<double>(cfg, ds, &dyn_rows);
  cfg.mode = sg::GraphMode::Fused;
  auto fus = sg::train<double>(cfg, ds, &fus_rows);

  ASSERT_EQ(dyn_rows.size(), fus_rows.size());
  for (std::size_t i = 0; i < dyn_rows.size(); ++i) {
    EXPECT_EQ(dyn_rows[i].loss, fus_rows[i].loss) << "iter " << i;
    EXPECT_EQ(dyn_rows[i].acc, fus_rows[i].acc) << "iter " << i;
  }
  EXPECT_TRUE(dyn.w_in.bit_equal(fus.w_in));
  EXPECT_TRUE(dyn.w_rec.bit_equal(fus.w_rec));
  EXPECT_TRUE(dyn.w_out.bit_equal(fus.w_out));
  EXPECT_TRUE(dyn.b_out.bit_equal(fus.b_out));
}

TEST(Train, ResumesFromGivenWeights) {
  auto cfg = small_config();
  cfg.iters = 4;
  sg::Dataset ds = sg::synthetic_dataset(2, 32, 5);
  auto w1 = sg::train<double>(cfg, ds);

  // Restart from w1; iteration 0 of the resumed run must consume the same
  // batches as a fresh run (the batcher is rebuilt from data_seed).
  std::vector<sg::MetricsRow> rows;
  auto w2 = sg::train<double>(cfg, ds, &rows, nullptr, &w1);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(w1.w_in.bit_equal(w2.w_in)) << "resumed training should keep moving";
}

TEST(Train, RejectsBadShapesAndEmptyData) {
  auto cfg = small_config();
  sg::Dataset ds = sg::synthetic_dataset(2, 32, 5);

  cfg.seq_len = 30;  // does not divide 784
  EXPECT_THROW(sg::train<double>(cfg, ds), sg::ValueError);

  cfg = small_config();
  cfg.net.classes = 1;  // fewer heads than dataset classes
  EXPECT_THROW(sg::train<double>(cfg, ds), sg::ConsistencyError);

  cfg = small_config();
  sg::Dataset empty;
  empty.count = 0;
  empty.pixels = 784;
  empty.classes = 2;
  EXPECT_THROW(sg::train<double>(cfg, empty), sg::UsageError);
}

TEST(Train, MetricsCsvRoundTrip) {
  std::vector<sg::MetricsRow> rows;
  rows.push_back({0, 0.6931471805, 0.5, 1.25, 2.5});
  rows.push_back({1, 0.25, 1.0, 0.5, 0.75});
  const std::string path = "trainer_metrics_test.csv";
  sg::write_metrics_csv(path, rows);

  std::ifstream f(path);
  ASSERT_TRUE(f.good());
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "iter,loss,acc,fwd_ms,bwd_ms");
  std::getline(f, line);
  EXPECT_EQ(line, "0,0.693147,0.5000,1.250,2.500");
  std::getline(f, line);
  EXPECT_EQ(line, "1,0.250000,1.0000,0.500,0.750");
  EXPECT_FALSE(std::getline(f, line));
  std::remove(path.c_str());
}

TEST(Evaluate, LimitsAndErrors) {
  auto cfg = small_config();
  cfg.iters = 2;
  sg::Dataset ds = sg::synthetic_dataset(2, 24, 5);
  auto w = sg::train<double>(cfg, ds);

  double full = sg::evaluate(w, cfg.net, cfg.seq_len, ds);
  double capped = sg::evaluate(w, cfg.net, cfg.seq_len, ds, 8);
  double clamped = sg::evaluate(w, cfg.net, cfg.seq_len, ds, 1000);
  EXPECT_GE(full, 0.0);
  EXPECT_LE(full, 1.0);
  EXPECT_GE(capped, 0.0);
  EXPECT_LE(capped, 1.0);
  EXPECT_EQ(clamped, full) << "limit past the end means the whole set";

  sg::Dataset empty;
  empty.count = 0;
  empty.pixels = 784;
  empty.classes = 2;
  EXPECT_THROW(sg::evaluate(w, cfg.net, cfg.seq_len, empty), sg::UsageError);
}

TEST(Train, ArgmaxPrefersLowestOnTies) {
  auto t = sg::Tensor<double>::matrix({{1.0, 1.0, 0.5}, {0.0, 2.0, 2.0}});
  EXPECT_EQ(sg::detail::argmax_row(t, 0), 0);
  EXPECT_EQ(sg::detail::argmax_row(t, 1), 1);
}

}  // namespace

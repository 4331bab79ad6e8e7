#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace frrn;

TEST(Shape, RejectsEmptyExtents) {
  EXPECT_THROW(Tensor<double>(Shape{1, 0, 2, 2}), ShapeError);
  EXPECT_THROW(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, IndexingIsRowMajorNchw) {
  Tensor<double> t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.offset(1, 2, 3, 4), t.size() - 1);
  EXPECT_EQ(t.offset(0, 1, 0, 0), 20u);
  t.at(1, 0, 2, 3) = 7;
  EXPECT_EQ(t[t.offset(1, 0, 2, 3)], 7);
}

TEST(Tensor, AllFiniteDetectsNanAndInf) {
  Tensor<float> t(Shape{1, 1, 3, 3}, 1.0f);
  EXPECT_TRUE(t.all_finite());
  t[4] = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(t.all_finite());
  t[4] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tape, SumGradientIsOnes) {
  Tape<double> tape;
  std::mt19937_64 rng(3);
  Var<double> x = tape.input(Tensor<double>::randn(Shape{2, 3, 4, 5}, rng), true);
  Var<double> l = sum(tape, x);
  tape.backward_full(l);
  for (double g : x.grad().values()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, NonScalarLossRejected) {
  Tape<double> tape;
  Var<double> x = tape.input(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
  Var<double> y = relu(tape, x);
  EXPECT_THROW(tape.backward_full(y), std::exception);
}

TEST(Tape, LinearChainMatchesHandChainRule) {
  // y = w2 * (w1 * x) with 1x1 convolutions on one channel: dL/dx = w1 w2.
  Parameter<double> w1("w1", Tensor<double>(Shape{1, 1, 1, 1}, 3.0), true);
  Parameter<double> w2("w2", Tensor<double>(Shape{1, 1, 1, 1}, -0.5), true);
  Tape<double> tape;
  Var<double> x = tape.input(Tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{2.0, 4.0}), true);
  Var<double> h = conv2d(tape, x, w1, nullptr, 1, 0);
  Var<double> y = conv2d(tape, h, w2, nullptr, 1, 0);
  tape.backward_full(sum(tape, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], -1.5);
  EXPECT_DOUBLE_EQ(x.grad()[1], -1.5);
  EXPECT_DOUBLE_EQ(w1.grad[0], -0.5 * 6.0);
  EXPECT_DOUBLE_EQ(w2.grad[0], 3.0 * 6.0);
}

TEST(Tape, FanOutAccumulatesGradients) {
  Tape<double> tape;
  Var<double> x = tape.input(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
  Var<double> y = add(tape, x, scale(tape, x, 2.0));
  tape.backward_full(sum(tape, y));
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 3.0);
}

TEST(Tape, NonFiniteForwardThrows) {
  Tape<double> tape;
  Tensor<double> t(Shape{1, 1, 1, 2}, 1.0);
  t[1] = std::numeric_limits<double>::infinity();
  Var<double> x = tape.input(t, true);
  EXPECT_THROW(scale(tape, x, 0.0), NumericError);
}

namespace {

// sum of softmax is constant, so losses weight it first
Tensor<double> loss_weights(const Shape& s) {
  std::mt19937_64 rng(77);
  return Tensor<double>::randn(s, rng);
}

// Small random network: conv-bn-relu, pool, conv, unpool, add, softmax.
double small_net(Tape<double>& tape, ParamStore<double>& p, const Tensor<double>& input, bool cut) {
  Var<double> x = tape.input(input);
  Var<double> h = conv2d(tape, x, p.get("c1"), &p.get("b1"));
  h = relu(tape, batch_norm(tape, h, BatchNormParams<double>{&p.get("g"), &p.get("be"), &p.get("rm"), &p.get("rv")},
                            Mode::Train));
  if (cut) tape.cut();
  Var<double> d = max_pool(tape, h, 2);
  d = conv2d(tape, d, p.get("c2"), nullptr);
  if (cut) tape.cut();
  d = unpool_repeat(tape, d, 2);
  Var<double> s = softmax_channels(tape, add(tape, h, d));
  Var<double> l = weighted_sum(tape, scale(tape, s, 0.5), loss_weights(s.value().shape()));
  return l.value()[0];
}

ParamStore<double> small_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore<double> p;
  p.add("c1", Tensor<double>::randn(Shape{4, 2, 3, 3}, rng, 0.5));
  p.add("b1", Tensor<double>::randn(Shape{1, 4, 1, 1}, rng, 0.5));
  p.add("g", Tensor<double>::uniform(Shape{1, 4, 1, 1}, rng, 0.5, 1.5));
  p.add("be", Tensor<double>::randn(Shape{1, 4, 1, 1}, rng, 0.1));
  p.add("rm", Tensor<double>(Shape{1, 4, 1, 1}, 0.0), false);
  p.add("rv", Tensor<double>(Shape{1, 4, 1, 1}, 1.0), false);
  p.add("c2", Tensor<double>::randn(Shape{4, 4, 3, 3}, rng, 0.5));
  return p;
}

}  // namespace

TEST(Tape, CheckpointedEqualsFullOnSmallNetwork) {
  std::mt19937_64 rng(11);
  const auto input = Tensor<double>::randn(Shape{2, 2, 8, 8}, rng);
  std::vector<Tensor<double>> grads[2];
  MemoryStats stats[2];
  for (int mode = 0; mode < 2; ++mode) {
    auto p = small_params(5);
    Tape<double> tape;
    Var<double> x = tape.input(input);
    Var<double> h = conv2d(tape, x, p.get("c1"), &p.get("b1"));
    h = relu(tape, batch_norm(tape, h, BatchNormParams<double>{&p.get("g"), &p.get("be"), &p.get("rm"), &p.get("rv")},
                              Mode::Train));
    if (mode == 1) tape.cut();
    Var<double> d = conv2d(tape, max_pool(tape, h, 2), p.get("c2"), nullptr);
    if (mode == 1) tape.cut();
    d = unpool_repeat(tape, d, 2);
    h.reset();
    Var<double> sm = softmax_channels(tape, d);
    Var<double> l = weighted_sum(tape, sm, loss_weights(sm.value().shape()));
    d.reset();
    sm.reset();
    if (mode == 0) {
      tape.backward_full(l);
    } else {
      tape.backward_checkpointed(l);
    }
    stats[mode] = tape.stats();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i].trainable) grads[mode].push_back(p[i].grad);
    }
  }
  ASSERT_EQ(grads[0].size(), grads[1].size());
  for (std::size_t i = 0; i < grads[0].size(); ++i) EXPECT_TRUE(grads[0][i] == grads[1][i]) << i;
  EXPECT_LT(stats[1].peak, stats[0].peak);
  EXPECT_GT(stats[1].recomputed_nodes, 0u);
}

TEST(Tape, CheckpointedWithoutCutsMatchesFullIncludingPeak) {
  std::mt19937_64 rng(2);
  const auto input = Tensor<double>::randn(Shape{1, 2, 8, 8}, rng);
  std::vector<Tensor<double>> grads[2];
  std::size_t peak[2];
  for (int mode = 0; mode < 2; ++mode) {
    auto p = small_params(9);
    Tape<double> tape;
    Var<double> x = tape.input(input);
    Var<double> l = sum(tape, relu(tape, conv2d(tape, x, p.get("c1"), &p.get("b1"))));
    mode == 0 ? tape.backward_full(l) : tape.backward_checkpointed(l);
    peak[mode] = tape.stats().peak;
    grads[mode] = {p.get("c1").grad, p.get("b1").grad};
  }
  EXPECT_EQ(peak[0], peak[1]);
  EXPECT_TRUE(grads[0][0] == grads[1][0]);
  EXPECT_TRUE(grads[0][1] == grads[1][1]);
}

TEST(Tape, FullBackwardAfterCutIsRejected) {
  auto p = small_params(1);
  std::mt19937_64 rng(1);
  Tape<double> tape;
  Var<double> x = tape.input(Tensor<double>::randn(Shape{1, 2, 4, 4}, rng));
  // the conv output feeds only the relu in the same block, so the cut drops it
  Var<double> h = relu(tape, conv2d(tape, x, p.get("c1"), nullptr));
  tape.cut();
  Var<double> l = sum(tape, conv2d(tape, h, p.get("c2"), nullptr));
  h.reset();
  EXPECT_THROW(tape.backward_full(l), std::logic_error);
}

TEST(Tape, CutPointBeyondTapeIsRejected) {
  auto p = small_params(1);
  std::mt19937_64 rng(1);
  Tape<double> tape({1000});
  Var<double> x = tape.input(Tensor<double>::randn(Shape{1, 2, 4, 4}, rng));
  Var<double> l = sum(tape, conv2d(tape, x, p.get("c1"), nullptr));
  EXPECT_THROW(tape.backward_checkpointed(l), std::invalid_argument);
}

TEST(Tape, RecomputeDoesNotUpdateRunningStatisticsTwice) {
  auto a = small_params(4), b = small_params(4);
  std::mt19937_64 rng(8);
  const auto input = Tensor<double>::randn(Shape{2, 2, 8, 8}, rng);
  {
    Tape<double> tape;
    small_net(tape, a, input, false);
  }
  {
    Tape<double> tape;
    Var<double> x = tape.input(input);
    Var<double> h = conv2d(tape, x, b.get("c1"), &b.get("b1"));
    tape.cut();
    h = batch_norm(tape, h, BatchNormParams<double>{&b.get("g"), &b.get("be"), &b.get("rm"), &b.get("rv")}, Mode::Train);
    tape.cut();
    Var<double> l = sum(tape, relu(tape, h));
    h.reset();
    tape.backward_checkpointed(l);
  }
  EXPECT_TRUE(a.get("rm").value == b.get("rm").value);
  EXPECT_TRUE(a.get("rv").value == b.get("rv").value);
}

class TapeFiniteDifference : public ::testing::TestWithParam<int> {};

TEST_P(TapeFiniteDifference, SmallNetworkMatchesCentralDifferences) {
  auto p = small_params(100 + GetParam());
  std::mt19937_64 rng(200 + GetParam());
  const auto input = Tensor<double>::randn(Shape{2, 2, 4, 4}, rng);
  {
    Tape<double> tape;
    Var<double> x = tape.input(input);
    p.zero_grad();
    Var<double> h = conv2d(tape, x, p.get("c1"), &p.get("b1"));
    h = relu(tape, batch_norm(tape, h, BatchNormParams<double>{&p.get("g"), &p.get("be"), &p.get("rm"), &p.get("rv")},
                              Mode::Train));
    Var<double> d = unpool_repeat(tape, conv2d(tape, max_pool(tape, h, 2), p.get("c2"), nullptr), 2);
    Var<double> s = softmax_channels(tape, add(tape, h, d));
    tape.backward_full(weighted_sum(tape, scale(tape, s, 0.5), loss_weights(s.value().shape())));
  }
  for (const char* name : {"c1", "b1", "g", "be", "c2"}) {
    auto& prm = p.get(name);
    const Tensor<double> analytic = prm.grad;
    const auto numeric = oracle::numeric_grad(&prm.value, [&] {
      Tape<double> t;
      return small_net(t, p, input, false);
    });
    if (std::string(name) == "b1") {
      // batch norm removes the bias feeding it, so both gradients vanish
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        EXPECT_LT(std::abs(analytic[i]), 1e-12);
        EXPECT_LT(std::abs(numeric[i]), 1e-8);
      }
      continue;
    }
    EXPECT_LE(oracle::rel_error(analytic, numeric), 1e-4) << name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, TapeFiniteDifference, ::testing::Range(0, 4));

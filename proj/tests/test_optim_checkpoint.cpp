#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "oracles.hpp"

using namespace frrn;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 2, 2}, 0.7), true);
  for (int i = 0; i < 5; ++i) adam_step(p, AdamConfig{});
  for (double v : p.value.values()) EXPECT_EQ(v, 0.7);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {1e-3, 0.5, -4.0}) {
    Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 1}, 1.0), true);
    p.grad[0] = g;
    adam_step(p, AdamConfig{0.01});
    // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
    EXPECT_NEAR(p.value[0], 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
  }
}

TEST(Adam, MatchesHandRecurrenceOverSeveralSteps) {
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 1}, 0.0), true);
  double m = 0, v = 0, x = 0;
  const double grads[] = {0.3, -0.1, 0.7, 0.2};
  for (int t = 1; t <= 4; ++t) {
    p.grad[0] = grads[t - 1];
    adam_step(p, AdamConfig{0.05, 0.8, 0.9, 1e-6});
    m = 0.8 * m + 0.2 * grads[t - 1];
    v = 0.9 * v + 0.1 * grads[t - 1] * grads[t - 1];
    x -= 0.05 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.9, t))) + 1e-6);
    EXPECT_NEAR(p.value[0], x, 1e-14);
  }
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  const std::vector<double> target{3.0, -2.0, 0.5};
  const std::vector<double> curvature{1.0, 4.0, 0.25};
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 3}, 0.0), true);
  int steps = 0;
  for (; steps < 2000; ++steps) {
    for (int i = 0; i < 3; ++i) p.grad[i] = curvature[i] * (p.value[i] - target[i]);
    adam_step(p, AdamConfig{0.05});
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.value[i], target[i], 1e-3);
}

TEST(Adam, SkipsNonTrainable) {
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 1}, 2.0), false);
  adam_step(p, AdamConfig{});
  EXPECT_EQ(p.value[0], 2.0);
}

namespace {

ParamStore<double> sample_store() {
  std::mt19937_64 rng(1);
  ParamStore<double> s;
  s.add("a.weight", Tensor<double>::randn(Shape{2, 3, 3, 3}, rng));
  s.add("a.running_var", Tensor<double>::uniform(Shape{1, 2, 1, 1}, rng, 0.5, 1.0), false);
  auto& p = s.add("b", Tensor<double>::randn(Shape{1, 4, 1, 1}, rng));
  p.grad = Tensor<double>::randn(p.value.shape(), rng);
  adam_step(p, AdamConfig{});
  return s;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const auto s = sample_store();
  std::stringstream ss;
  write_checkpoint(ss, s);
  const auto r = read_checkpoint<double>(ss);
  ASSERT_EQ(r.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(r[i].name, s[i].name);
    EXPECT_EQ(r[i].trainable, s[i].trainable);
    EXPECT_TRUE(r[i].value == s[i].value);
    if (s[i].trainable) {
      EXPECT_EQ(r[i].adam.step, s[i].adam.step);
      EXPECT_TRUE(r[i].adam.m == s[i].adam.m);
      EXPECT_TRUE(r[i].adam.v == s[i].adam.v);
    }
  }
}

TEST(Checkpoint, LayoutStartsWithMagicAndHeader) {
  ParamStore<float> s;
  s.add("x", Tensor<float>(Shape{1, 1, 1, 1}, 1.5f), false);
  std::stringstream ss;
  write_checkpoint(ss, s);
  const std::string bytes = ss.str();
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(bytes.substr(0, 8), "FRRNCKPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 4u);  // scalar width
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 1u);  // record count
  // 8 magic + 3*4 header + 4 len + 1 name + 16 shape + 1 flag + 4 value
  EXPECT_EQ(bytes.size(), 46u);
}

TEST(Checkpoint, WidthConversionOnLoad) {
  const auto s = sample_store();
  std::stringstream ss;
  write_checkpoint(ss, s);
  const auto f = read_checkpoint<float>(ss);
  EXPECT_FLOAT_EQ(f[0].value[5], static_cast<float>(s[0].value[5]));
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint<double>(bad), CheckpointError);
  const auto s = sample_store();
  std::stringstream ss;
  write_checkpoint(ss, s);
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_checkpoint<double>(truncated), CheckpointError);
  EXPECT_THROW(load_checkpoint<double>("/nonexistent/x.ckpt"), CheckpointError);
}

TEST(Checkpoint, AssignFromChecksShapes) {
  auto dst = sample_store();
  const auto src = sample_store();
  EXPECT_NO_THROW(assign_from(dst, src));
  ParamStore<double> other;
  other.add("a.weight", Tensor<double>(Shape{1, 1, 1, 1}));
  EXPECT_THROW(assign_from(dst, other), CheckpointError);
}

TEST(Checkpoint, NetworkFileRoundTrip) {
  const auto spec = build_network(Arch::FrrnBMini, 4);
  const auto p = init_network<float>(spec, 3);
  const auto path = (std::filesystem::temp_directory_path() / "frrn_ckpt_test.ckpt").string();
  save_checkpoint(p, path);
  const auto q = load_checkpoint<float>(path);
  std::filesystem::remove(path);
  auto found = detect_network(q);
  ASSERT_TRUE(found);
  EXPECT_EQ(found->name, "frrn-b-mini");
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_TRUE(p[i].value == q[i].value);
}

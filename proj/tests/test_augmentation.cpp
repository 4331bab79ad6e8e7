#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace frrn;

TEST(Gamma, ZeroOffsetIsIdentityExponent) { EXPECT_EQ(gamma_from_offset(0.0), 1.0); }

TEST(Gamma, KnownValue) {
  const double r = 0.35 / std::sqrt(2.0);
  EXPECT_DOUBLE_EQ(gamma_from_offset(0.35), std::log(0.5 + r) / std::log(0.5 - r));
  EXPECT_NEAR(gamma_from_offset(0.35), 0.2115, 5e-5);
}

TEST(Gamma, ReciprocalSymmetry) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> z(-0.5, 0.5);
  for (int i = 0; i < 10000; ++i) {
    const double v = z(rng);
    EXPECT_NEAR(gamma_from_offset(v) * gamma_from_offset(-v), 1.0, 1e-12);
  }
}

TEST(Gamma, FixedPointOfConstruction) {
  // 1 - u^g = u has the closed-form root u = 0.5 - Z / sqrt(2) for g = gamma(Z)
  for (double z : {-0.49, -0.35, -0.1, 0.0, 0.2, 0.35, 0.45}) {
    const double u = gamma_fixed_point(gamma_from_offset(z));
    EXPECT_NEAR(u, 0.5 - z / std::sqrt(2.0), 1e-12) << z;
    EXPECT_NEAR(1 - std::pow(u, gamma_from_offset(z)), u, 1e-12);
  }
  EXPECT_THROW(gamma_fixed_point(0.0), std::invalid_argument);
}

TEST(Gamma, SamplerMeanIsUnbiasedAndBeatsNaive) {
  GammaSampler s(0.35, 5);
  std::mt19937_64 rng(6);
  double mu = 0, mn = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    mu += gamma_fixed_point(s.sample());
    mn += gamma_fixed_point(naive_gamma(0.25, 1.75, rng));
  }
  mu /= n;
  mn /= n;
  EXPECT_NEAR(mu, 0.5, 0.005);
  EXPECT_LT(std::abs(mu - 0.5), std::abs(mn - 0.5));
}

TEST(Gamma, SamplerRangeAndValidation) {
  EXPECT_THROW(GammaSampler(0.51), ConfigError);
  EXPECT_THROW(GammaSampler(-0.1), ConfigError);
  GammaSampler zero(0.0, 1);
  EXPECT_EQ(zero.sample(), 1.0);
  GammaSampler s(0.2, 3);
  for (int i = 0; i < 1000; ++i) {
    const double z = s.sample_offset();
    EXPECT_LE(std::abs(z), 0.2);
  }
  std::mt19937_64 rng(1);
  EXPECT_EQ(naive_gamma(1.0, 1.0, rng), 1.0);
  EXPECT_THROW(naive_gamma(0.0, 1.0, rng), ConfigError);
}

TEST(ApplyGamma, PowerLaw) {
  Tensor<double> x(Shape{1, 3, 1, 3}, std::vector<double>{0, 1, 0.5, 0, 1, 0.5, 0.25, 0.75, 0.1});
  EXPECT_TRUE(apply_gamma(x, 1.0) == x);
  const auto y = apply_gamma(x, 2.0);
  EXPECT_DOUBLE_EQ(y[2], 0.25);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
  for (double g : {0.2, 3.7}) {
    const auto z = apply_gamma(x, g);
    EXPECT_EQ(z[3], 0.0);
    EXPECT_EQ(z[4], 1.0);
  }
  x[0] = 1.5;
  EXPECT_THROW(apply_gamma(x, 2.0), std::invalid_argument);
}

namespace {

SegmentationSample<double> row_sample(const std::vector<double>& row) {
  const int w = static_cast<int>(row.size());
  SegmentationSample<double> s{Tensor<double>(Shape{1, 3, 1, w}), LabelMap(1, w)};
  for (int x = 0; x < w; ++x) {
    for (int c = 0; c < 3; ++c) s.image.at(0, c, 0, x) = row[x];
    s.labels.at(0, x) = static_cast<std::uint8_t>(x);
  }
  return s;
}

}  // namespace

TEST(Translate, ZeroShiftIsIdentity) {
  const auto s = row_sample({0.1, 0.2, 0.3});
  const auto t = translate(s, 0, 0);
  EXPECT_TRUE(t.image == s.image);
  EXPECT_EQ(t.labels, s.labels);
}

TEST(Translate, ReflectsImageAndVoidsLabels) {
  const auto t = translate(row_sample({0.1, 0.2, 0.3}), 1, 0);
  EXPECT_EQ(t.image.at(0, 0, 0, 0), 0.2);
  EXPECT_EQ(t.image.at(0, 1, 0, 1), 0.1);
  EXPECT_EQ(t.image.at(0, 2, 0, 2), 0.2);
  EXPECT_EQ(t.labels.values, (std::vector<std::uint8_t>{kVoidLabel, 0, 1}));
}

TEST(Translate, ReflectionDoesNotRepeatEdge) {
  EXPECT_EQ(reflect_index(-1, 5), 1);
  EXPECT_EQ(reflect_index(-2, 5), 2);
  EXPECT_EQ(reflect_index(5, 5), 3);
  EXPECT_EQ(reflect_index(6, 5), 2);
  EXPECT_EQ(reflect_index(-7, 3), 1);
  EXPECT_EQ(reflect_index(-3, 1), 0);
}

TEST(Translate, ShiftBackRestoresInterior) {
  std::mt19937_64 rng(4);
  const int h = 9, w = 13;
  SegmentationSample<double> s{Tensor<double>::uniform(Shape{1, 3, h, w}, rng, 0.0, 1.0), LabelMap(h, w)};
  for (auto& v : s.labels.values) v = static_cast<std::uint8_t>(rng() % 5);
  for (int trial = 0; trial < 20; ++trial) {
    const int dx = static_cast<int>(rng() % 7) - 3, dy = static_cast<int>(rng() % 5) - 2;
    const auto back = translate(translate(s, dx, dy), -dx, -dy);
    for (int y = std::max(0, -dy); y < h - std::max(0, dy); ++y)
      for (int x = std::max(0, -dx); x < w - std::max(0, dx); ++x) {
        EXPECT_EQ(back.labels.at(y, x), s.labels.at(y, x));
        for (int c = 0; c < 3; ++c) EXPECT_EQ(back.image.at(0, c, y, x), s.image.at(0, c, y, x));
      }
  }
}

TEST(Translate, ExcessiveShiftIsError) {
  EXPECT_THROW(translate(row_sample({0.1, 0.2, 0.3}), 3, 0), std::invalid_argument);
}

TEST(Augment, DeterministicAndLabelsStayValid) {
  std::mt19937_64 gen(3);
  SegmentationSample<float> s{Tensor<float>::uniform(Shape{1, 3, 16, 32}, gen, 0.f, 1.f), LabelMap(16, 32)};
  for (auto& v : s.labels.values) v = static_cast<std::uint8_t>(gen() % 4);
  AugmentConfig cfg;
  std::mt19937_64 r1(10), r2(10);
  const auto a = augment(s, cfg, r1), b = augment(s, cfg, r2);
  EXPECT_TRUE(a.image == b.image);
  EXPECT_EQ(a.labels, b.labels);
  for (auto v : a.labels.values) EXPECT_TRUE(v < 4 || v == kVoidLabel);
  for (float v : a.image.values()) {
    EXPECT_GE(v, 0.f);
    EXPECT_LE(v, 1.f);
  }
  AugmentConfig off{false, -1, false, 0.35};
  const auto c = augment(s, off, r1);
  EXPECT_TRUE(c.image == s.image);
}

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace frrn;

namespace {

LabelMap from_rows(const std::vector<std::vector<int>>& rows) {
  LabelMap m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.at(y, x) = static_cast<std::uint8_t>(rows[y][x]);
  return m;
}

LabelMap vertical_split(int h, int w, int at) {
  LabelMap m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(y, x) = x < at ? 0 : 1;
  return m;
}

}  // namespace

TEST(Confusion, PerfectPredictionIsDiagonal) {
  const auto gt = from_rows({{0, 1, 2}, {2, 1, 0}});
  ConfusionMatrix cm(3);
  accumulate(cm, gt, gt);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(cm.at(i, j), i == j ? 2u : 0u);
  const auto iou = mean_iou(cm);
  EXPECT_EQ(iou.mean, 1.0);
}

TEST(Confusion, AllVoidGivesZeroMatrix) {
  LabelMap gt(3, 3, kVoidLabel), pred(3, 3, 1);
  ConfusionMatrix cm(2);
  accumulate(cm, gt, pred);
  EXPECT_EQ(cm.total(), 0u);
  EXPECT_THROW(mean_iou(cm), std::invalid_argument);
  EXPECT_TRUE(std::isnan(mean_iou_or_nan(cm)));
}

TEST(Confusion, HandCountedThreeByThree) {
  const auto gt = from_rows({{0, 0, 1}, {1, 2, 2}, {2, 255, 0}});
  const auto pred = from_rows({{0, 1, 1}, {2, 2, 0}, {2, 1, 0}});
  ConfusionMatrix cm(3);
  accumulate(cm, gt, pred);
  const std::uint64_t want[3][3] = {{2, 1, 0}, {0, 1, 1}, {1, 0, 2}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(cm.at(i, j), want[i][j]) << i << "," << j;
  EXPECT_EQ(cm.total(), 8u);
}

TEST(Confusion, OutOfRangeLabelIsError) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(accumulate(cm, from_rows({{0, 2}}), from_rows({{0, 1}})), std::exception);
  EXPECT_THROW(accumulate(cm, from_rows({{0, 1}}), from_rows({{0, 1}, {1, 1}})), ShapeError);
}

TEST(MeanIoU, TwoClassHandArithmetic) {
  // gt: six 0s and two 1s; prediction swaps one pixel each way
  const auto gt = from_rows({{0, 0, 0, 0, 0, 0, 1, 1}});
  const auto pred = from_rows({{0, 0, 0, 0, 0, 1, 0, 1}});
  ConfusionMatrix cm(2);
  accumulate(cm, gt, pred);
  const auto r = mean_iou(cm);
  EXPECT_DOUBLE_EQ(r.per_class[0], 5.0 / 7.0);
  EXPECT_DOUBLE_EQ(r.per_class[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mean, (5.0 / 7.0 + 1.0 / 3.0) / 2);
}

TEST(MeanIoU, DisjointClassScoresZeroAndAbsentClassIsSkipped) {
  const auto gt = from_rows({{0, 0, 1, 1}});
  const auto pred = from_rows({{0, 0, 0, 0}});
  ConfusionMatrix cm(3);
  accumulate(cm, gt, pred);
  const auto r = mean_iou(cm);
  EXPECT_EQ(r.per_class[1], 0.0);
  EXPECT_TRUE(std::isnan(r.per_class[2]));
  EXPECT_DOUBLE_EQ(r.mean, 0.25);
}

TEST(MeanIoU, BoundedAndPermutationInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 5);
    LabelMap gt(6, 7), pred(6, 7);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt.values[i] = rng() % 9 == 0 ? kVoidLabel : static_cast<std::uint8_t>(rng() % c);
      pred.values[i] = static_cast<std::uint8_t>(rng() % c);
    }
    gt.values[0] = 0;
    std::vector<std::uint8_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ConfusionMatrix a(c), b(c);
    accumulate(a, gt, pred);
    accumulate(b, remap_labels(gt, perm), remap_labels(pred, perm));
    const double ma = mean_iou(a).mean;
    EXPECT_GE(ma, 0.0);
    EXPECT_LE(ma, 1.0);
    EXPECT_NEAR(ma, mean_iou(b).mean, 1e-15);
  }
}

TEST(Boundary, UniformMapHasNoBoundary) {
  const LabelMap gt(5, 6, 2);
  for (auto v : boundary_mask(gt)) EXPECT_EQ(v, 0);
  for (auto v : trimap_band(gt, 3).mask) EXPECT_EQ(v, 0);
}

TEST(Boundary, VerticalSplitRadiusOneIsTwoColumns) {
  const auto gt = vertical_split(8, 8, 4);
  const auto band = trimap_band(gt, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(band.mask[y * 8 + x], (x == 3 || x == 4) ? 1 : 0) << y << "," << x;
  const auto band2 = trimap_band(gt, 2);
  for (int x = 0; x < 8; ++x) EXPECT_EQ(band2.mask[x], (x >= 2 && x <= 5) ? 1 : 0);
}

TEST(Boundary, VoidNeverSourcesBoundary) {
  auto gt = vertical_split(4, 6, 3);
  for (int y = 0; y < 4; ++y) gt.at(y, 3) = kVoidLabel;
  // columns 2 and 4 now face void, not each other
  for (auto v : boundary_mask(gt)) EXPECT_EQ(v, 0);
}

TEST(DistanceTransform, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 12), w = 1 + static_cast<int>(rng() % 12);
    std::vector<std::uint8_t> src(h * w);
    for (auto& s : src) s = rng() % 7 == 0;
    src[rng() % src.size()] = 1;
    EXPECT_EQ(squared_distance_transform(src, h, w), oracle::brute_edt(src, h, w));
  }
}

TEST(Trimap, BandsAreNested) {
  std::mt19937_64 rng(8);
  LabelMap gt(20, 24);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x) gt.at(y, x) = static_cast<std::uint8_t>((x / 7 + y / 5) % 3);
  for (int r = 1; r < 16; ++r) {
    const auto a = trimap_band(gt, r), b = trimap_band(gt, r + 1);
    for (std::size_t i = 0; i < a.mask.size(); ++i) EXPECT_LE(a.mask[i], b.mask[i]);
  }
}

TEST(Trimap, SaturatedRadiusEqualsGlobalIoU) {
  std::mt19937_64 rng(9);
  LabelMap gt(16, 16), pred(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) gt.at(y, x) = static_cast<std::uint8_t>(x < 5 ? 0 : (y < 9 ? 1 : 2));
  for (std::size_t i = 0; i < pred.size(); ++i) pred.values[i] = rng() % 4 == 0 ? rng() % 3 : gt.values[i];
  ConfusionMatrix global(3);
  accumulate(global, gt, pred);
  const auto curve = trimap_curve(gt, pred, {1, 2, 4, 8, 32}, 3);
  EXPECT_EQ(curve.back().second, mean_iou(global).mean);
}

TEST(Trimap, PerfectPredictionIsFlatOne) {
  const auto gt = vertical_split(10, 10, 3);
  for (const auto& [r, v] : trimap_curve(gt, gt, {1, 2, 3, 5, 8}, 2)) EXPECT_EQ(v, 1.0) << r;
}

TEST(Trimap, BoundaryOnlyErrorsGiveIncreasingCurve) {
  // errors: the gt column just left of the split is predicted as the right class
  const auto gt = vertical_split(16, 32, 16);
  auto pred = gt;
  for (int y = 0; y < 16; ++y) pred.at(y, 15) = 1;
  const auto curve = trimap_curve(gt, pred, {1, 2, 3, 4, 6, 8, 12, 16}, 2);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_GT(curve[i].second, curve[i - 1].second) << curve[i].first;
}

TEST(Trimap, AccumulatorRejectsUnsortedRadii) {
  EXPECT_THROW(TrimapAccumulator({4, 2}, 2), std::invalid_argument);
  EXPECT_THROW(TrimapAccumulator({0, 2}, 2), std::invalid_argument);
}

TEST(Remap, CategoriesAndVoid) {
  const auto m = remap_labels(from_rows({{0, 1, 2, 255}}), {0, 0, 1});
  EXPECT_EQ(m.values, (std::vector<std::uint8_t>{0, 0, 1, 255}));
  EXPECT_THROW(remap_labels(from_rows({{3}}), {0, 0, 1}), std::invalid_argument);
}

#pragma once

// Confusion-matrix IoU and trimap (boundary band) evaluation.
//
// Boundary pixel: non-void pixel with at least one 4-neighbour carrying a
// different non-void label. Band of radius r: pixels whose Euclidean
// distance to the nearest boundary pixel is <= r, from an exact two-pass
// squared distance transform. Void pixels never count as boundary sources
// and never enter the confusion matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "frrn/sample.hpp"

namespace frrn {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 0)
      : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {}

  int classes() const noexcept { return classes_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.classes_ != classes_) throw std::invalid_argument("confusion matrix class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

/// Adds every non-void pixel (restricted to `region` when given) to `cm`.
inline void accumulate(ConfusionMatrix& cm, const LabelMap& gt, const LabelMap& pred,
                       const std::vector<std::uint8_t>* region = nullptr) {
  if (gt.height != pred.height || gt.width != pred.width) {
    throw ShapeError("accumulate: ground truth " + std::to_string(gt.height) + "x" +
                     std::to_string(gt.width) + " vs prediction " + std::to_string(pred.height) +
                     "x" + std::to_string(pred.width));
  }
  if (region != nullptr && region->size() != gt.size()) throw ShapeError("accumulate: region mask size");
  const int c = cm.classes();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint8_t g = gt.values[i];
    if (g == kVoidLabel) continue;
    if (region != nullptr && !(*region)[i]) continue;
    const std::uint8_t p = pred.values[i];
    if (g >= c || p >= c) {
      throw std::invalid_argument("accumulate: label " + std::to_string(std::max(g, p)) + " >= " +
                                  std::to_string(c) + " classes");
    }
    ++cm.at(g, p);
  }
}

struct IoUResult {
  std::vector<double> per_class;  // NaN where the class has empty union
  double mean = 0;
};

inline IoUResult mean_iou(const ConfusionMatrix& cm) {
  const int c = cm.classes();
  IoUResult r;
  r.per_class.assign(c, std::numeric_limits<double>::quiet_NaN());
  double sum = 0;
  int present = 0;
  for (int j = 0; j < c; ++j) {
    std::uint64_t row = 0, col = 0;
    for (int k = 0; k < c; ++k) {
      row += cm.at(j, k);
      col += cm.at(k, j);
    }
    const std::uint64_t diag = cm.at(j, j);
    const std::uint64_t uni = row + col - diag;
    if (uni == 0) continue;
    r.per_class[j] = static_cast<double>(diag) / static_cast<double>(uni);
    sum += r.per_class[j];
    ++present;
  }
  if (present == 0) throw std::invalid_argument("mean_iou: no class present");
  r.mean = sum / present;
  return r;
}

inline double mean_iou_or_nan(const ConfusionMatrix& cm) {
  return cm.total() == 0 ? std::numeric_limits<double>::quiet_NaN() : mean_iou(cm).mean;
}

inline std::vector<std::uint8_t> boundary_mask(const LabelMap& gt) {
  std::vector<std::uint8_t> mask(gt.size(), 0);
  const int h = gt.height, w = gt.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = gt.at(y, x);
      if (v == kVoidLabel) continue;
      auto differs = [&](int yy, int xx) {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return false;
        const std::uint8_t u = gt.at(yy, xx);
        return u != kVoidLabel && u != v;
      };
      if (differs(y - 1, x) || differs(y + 1, x) || differs(y, x - 1) || differs(y, x + 1)) {
        mask[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
  }
  return mask;
}

namespace detail {

inline constexpr double kFar = 1e30;

/// 1-D lower envelope of parabolas (squared distance transform).
inline void edt_1d(const double* f, int n, double* d, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0);
  int k = 0;
  z[0] = -inf;
  z[1] = inf;
  auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance from every pixel to the nearest source
/// pixel; kFar-ish values where there is no source.
inline std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& sources,
                                                      int height, int width) {
  std::vector<double> grid(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) grid[i] = sources[i] ? 0.0 : detail::kFar;
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> f(std::max(height, width)), d(std::max(height, width));
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) f[y] = grid[static_cast<std::size_t>(y) * width + x];
    detail::edt_1d(f.data(), height, d.data(), v, z);
    for (int y = 0; y < height; ++y) grid[static_cast<std::size_t>(y) * width + x] = d[y];
  }
  for (int y = 0; y < height; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * width;
    std::copy(row, row + width, f.begin());
    detail::edt_1d(f.data(), width, d.data(), v, z);
    std::copy(d.begin(), d.begin() + width, row);
  }
  return grid;
}

struct TrimapBand {
  int radius = 0;
  std::vector<std::uint8_t> mask;
};

/// Pixels closer than `radius` to a boundary pixel; radius 1 is the boundary itself.
inline TrimapBand band_from_distances(const std::vector<double>& d2, int radius) {
  if (radius < 1) throw std::invalid_argument("trimap band radius must be >= 1");
  TrimapBand band{radius, std::vector<std::uint8_t>(d2.size(), 0)};
  const double r2 = static_cast<double>(radius) * radius;
  for (std::size_t i = 0; i < d2.size(); ++i) band.mask[i] = d2[i] < r2 ? 1 : 0;
  return band;
}

inline TrimapBand trimap_band(const LabelMap& gt, int radius) {
  return band_from_distances(squared_distance_transform(boundary_mask(gt), gt.height, gt.width), radius);
}

/// Per-radius confusion matrices accumulated over many images; one distance
/// transform per image.
class TrimapAccumulator {
 public:
  TrimapAccumulator(std::vector<int> radii, int classes) : radii_(std::move(radii)) {
    for (std::size_t i = 0; i < radii_.size(); ++i) {
      if (radii_[i] < 1) throw std::invalid_argument("trimap radii must be >= 1");
      if (i > 0 && radii_[i] < radii_[i - 1]) throw std::invalid_argument("trimap radii must be sorted ascending");
    }
    cms_.assign(radii_.size(), ConfusionMatrix(classes));
  }

  void add(const LabelMap& gt, const LabelMap& pred) {
    const auto d2 = squared_distance_transform(boundary_mask(gt), gt.height, gt.width);
    for (std::size_t i = 0; i < radii_.size(); ++i) {
      const TrimapBand band = band_from_distances(d2, radii_[i]);
      accumulate(cms_[i], gt, pred, &band.mask);
    }
  }

  const std::vector<int>& radii() const noexcept { return radii_; }
  const std::vector<ConfusionMatrix>& matrices() const noexcept { return cms_; }

  /// (radius, mean IoU); NaN for radii whose band holds no evaluated pixel.
  std::vector<std::pair<int, double>> curve() const {
    std::vector<std::pair<int, double>> out;
    for (std::size_t i = 0; i < radii_.size(); ++i) out.emplace_back(radii_[i], mean_iou_or_nan(cms_[i]));
    return out;
  }

 private:
  std::vector<int> radii_;
  std::vector<ConfusionMatrix> cms_;
};

inline std::vector<std::pair<int, double>> trimap_curve(const LabelMap& gt, const LabelMap& pred,
                                                        const std::vector<int>& radii, int classes) {
  TrimapAccumulator acc(radii, classes);
  acc.add(gt, pred);
  return acc.curve();
}

/// Maps class ids through `mapping` (class -> category); void stays void.
inline LabelMap remap_labels(const LabelMap& in, const std::vector<std::uint8_t>& mapping) {
  LabelMap out = in;
  for (auto& v : out.values) {
    if (v == kVoidLabel) continue;
    if (v >= mapping.size()) throw std::invalid_argument("remap_labels: class " + std::to_string(v) + " unmapped");
    v = mapping[v];
  }
  return out;
}

}  // namespace frrn

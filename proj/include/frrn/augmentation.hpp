#pragma once

// Photometric and geometric augmentation.
//
// Gamma: x -> x^gamma with gamma = log(0.5 + Z/sqrt(2)) / log(0.5 - Z/sqrt(2))
// and Z ~ U[-a, a]. For this gamma the solution u of 1 - u^gamma = u is
// exactly 0.5 - Z/sqrt(2), so E[u] = 0.5.
//
// Translation: the image is padded by mirroring without repeating the edge
// pixel (abc -> b|abc); the label map is padded with void.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "frrn/sample.hpp"

namespace frrn {

inline double gamma_from_offset(double z) {
  const double r = z / std::sqrt(2.0);
  return std::log(0.5 + r) / std::log(0.5 - r);
}

/// Solves 1 - u^gamma = u for u in [0, 1] by bisection.
inline double gamma_fixed_point(double gamma) {
  if (!(gamma > 0)) throw std::invalid_argument("gamma_fixed_point: gamma must be positive");
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (1.0 - std::pow(mid, gamma) - mid > 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

class GammaSampler {
 public:
  explicit GammaSampler(double strength, std::uint64_t seed = 0) : strength_(strength), rng_(seed) {
    if (!(strength >= 0.0 && strength <= 0.5)) {
      throw ConfigError("gamma strength a must lie in [0, 0.5], got " + std::to_string(strength));
    }
  }

  double strength() const noexcept { return strength_; }

  /// Draws Z ~ U[-a, a].
  double sample_offset() {
    if (strength_ == 0.0) return 0.0;
    return std::uniform_real_distribution<double>(-strength_, strength_)(rng_);
  }

  double sample() { return gamma_from_offset(sample_offset()); }

 private:
  double strength_;
  std::mt19937_64 rng_;
};

/// gamma ~ U[lo, hi]; the biased scheme kept for comparison.
template <typename Rng>
double naive_gamma(double lo, double hi, Rng& rng) {
  if (!(lo > 0) || hi < lo) throw ConfigError("naive_gamma: need 0 < lo <= hi");
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <typename T>
Tensor<T> apply_gamma(const Tensor<T>& image, double gamma) {
  if (!(gamma > 0)) throw std::invalid_argument("apply_gamma: gamma must be positive");
  Tensor<T> out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const T v = image[i];
    if (!(v >= T(0) && v <= T(1))) {
      throw std::invalid_argument("apply_gamma: intensity " + std::to_string(v) + " outside [0, 1]");
    }
    out[i] = static_cast<T>(std::pow(static_cast<double>(v), gamma));
  }
  return out;
}

/// Mirror index into [0, n) without repeating the edge element.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

/// Shifts content by (dx, dy): output(y, x) = input(y - dy, x - dx).
template <typename T>
SegmentationSample<T> translate(const SegmentationSample<T>& in, int dx, int dy) {
  in.check();
  const int h = in.labels.height, w = in.labels.width;
  if (std::abs(dx) >= w || std::abs(dy) >= h) {
    throw std::invalid_argument("translate: shift (" + std::to_string(dx) + ", " + std::to_string(dy) +
                                ") exceeds image size " + std::to_string(w) + "x" + std::to_string(h));
  }
  SegmentationSample<T> out{Tensor<T>(in.image.shape()), LabelMap(h, w, kVoidLabel)};
  for (int y = 0; y < h; ++y) {
    const int sy = y - dy;
    const int ry = reflect_index(sy, h);
    for (int x = 0; x < w; ++x) {
      const int sx = x - dx;
      const int rx = reflect_index(sx, w);
      for (int c = 0; c < 3; ++c) out.image.at(0, c, y, x) = in.image.at(0, c, ry, rx);
      if (sy >= 0 && sy < h && sx >= 0 && sx < w) out.labels.at(y, x) = in.labels.at(sy, sx);
    }
  }
  return out;
}

struct AugmentConfig {
  bool translate = true;
  int max_shift = -1;  // -1: width / 8
  bool gamma = true;
  double gamma_strength = 0.35;
};

/// Random shift in [-d, d] per axis followed by gamma augmentation.
template <typename T, typename Rng>
SegmentationSample<T> augment(const SegmentationSample<T>& in, const AugmentConfig& cfg, Rng& rng) {
  SegmentationSample<T> out = in;
  if (cfg.translate) {
    int d = cfg.max_shift < 0 ? in.labels.width / 8 : cfg.max_shift;
    d = std::min({d, in.labels.width - 1, in.labels.height - 1});
    if (d > 0) {
      std::uniform_int_distribution<int> shift(-d, d);
      const int dx = shift(rng);
      const int dy = shift(rng);
      out = translate(out, dx, dy);
    }
  }
  if (cfg.gamma && cfg.gamma_strength > 0) {
    GammaSampler sampler(cfg.gamma_strength, rng());
    out.image = apply_gamma(out.image, sampler.sample());
  }
  return out;
}

}  // namespace frrn

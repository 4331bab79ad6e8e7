#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "frrn/loss.hpp"
#include "frrn/tensor.hpp"

namespace frrn {

/// Per-pixel class ids; kVoidLabel (255) marks unlabeled pixels.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const LabelMap&) const = default;
};

/// Image (1 x 3 x H x W, intensities in [0, 1]) with its pixel-aligned labels.
template <typename T>
struct SegmentationSample {
  Tensor<T> image;
  LabelMap labels;

  void check() const {
    const Shape& s = image.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("sample image must be 1x3xHxW, got " + s.str());
    if (s.h != labels.height || s.w != labels.width) {
      throw ShapeError("sample label map " + std::to_string(labels.height) + "x" +
                       std::to_string(labels.width) + " does not match image " + s.str());
    }
  }
};

}  // namespace frrn

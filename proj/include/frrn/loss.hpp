#pragma once

// Bootstrapped cross-entropy: the mean negative log-probability of the true
// class over the K non-void pixels whose true-class probability is smallest.
//
// Selection is "K smallest, ties broken by ascending pixel index"; the
// reported threshold is the (K+1)-th smallest true-class probability (or
// +inf when every non-void pixel is selected). Pixel index i enumerates the
// batch in N, H, W order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "frrn/kernels.hpp"
#include "frrn/tape.hpp"

namespace frrn {

inline constexpr std::uint8_t kVoidLabel = 255;
inline constexpr double kLogClamp = 1e-12;

struct LossReport {
  double loss = 0;
  std::size_t k_used = 0;
  double threshold = 0;
  std::vector<std::uint8_t> selected_mask;
};

/// Indices of the k smallest scores among non-void pixels, ascending by index.
struct Selection {
  std::vector<std::size_t> indices;
  double threshold = std::numeric_limits<double>::infinity();
};

template <typename S>
Selection select_hardest(std::span<const S> scores, std::span<const std::uint8_t> labels,
                         std::size_t k) {
  std::vector<std::size_t> candidates;
  candidates.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kVoidLabel) candidates.push_back(i);
  }
  if (candidates.empty()) throw std::invalid_argument("bootstrapped_ce: no supervised pixels");
  if (k == 0) throw std::invalid_argument("bootstrapped_ce: K must be positive");
  k = std::min(k, candidates.size());
  auto less = [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
  };
  Selection sel;
  if (k < candidates.size()) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                     candidates.end(), less);
    sel.threshold = static_cast<double>(scores[candidates[k]]);
  }
  sel.indices.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

/// K = round(fraction * H * W).
inline std::size_t k_schedule(int height, int width, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("k_schedule: fraction must lie in (0, 1]");
  }
  return static_cast<std::size_t>(std::llround(fraction * height * width));
}

/// Accepts "0.125" or "1/8".
inline double parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  double v = 0;
  try {
    if (slash == std::string::npos) {
      v = std::stod(text);
    } else {
      v = std::stod(text.substr(0, slash)) / std::stod(text.substr(slash + 1));
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("invalid fraction '" + text + "'");
  }
  if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("fraction '" + text + "' outside (0, 1]");
  return v;
}

namespace detail {

inline void check_labels(const Shape& s, std::span<const std::uint8_t> labels) {
  if (labels.size() != static_cast<std::size_t>(s.n) * s.plane()) {
    throw ShapeError("bootstrapped_ce: " + std::to_string(labels.size()) +
                     " labels for prediction " + s.str());
  }
  for (std::uint8_t l : labels) {
    if (l != kVoidLabel && l >= s.c) {
      throw std::invalid_argument("bootstrapped_ce: label " + std::to_string(l) + " >= " +
                                  std::to_string(s.c) + " classes");
    }
  }
}

/// Offset of (pixel i, class c) in an N x C x H x W tensor.
inline std::size_t class_offset(const Shape& s, std::size_t pixel, int c) {
  const std::size_t n = pixel / s.plane();
  const std::size_t hw = pixel % s.plane();
  return (n * s.c + c) * s.plane() + hw;
}

template <typename T>
std::vector<T> true_class_scores(const Tensor<T>& t, std::span<const std::uint8_t> labels) {
  const Shape& s = t.shape();
  std::vector<T> scores(labels.size(), T(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kVoidLabel) scores[i] = t[class_offset(s, i, labels[i])];
  }
  return scores;
}

template <typename T>
class BootstrappedCEOp final : public Op<T> {
 public:
  BootstrappedCEOp(std::vector<std::uint8_t> labels, std::size_t k, bool from_logits,
                   std::shared_ptr<LossReport> report)
      : labels_(std::move(labels)), k_(k), from_logits_(from_logits), report_(std::move(report)) {}

  std::string_view name() const override {
    return from_logits_ ? "bootstrapped_ce_logits" : "bootstrapped_ce";
  }

  Tensor<T> forward(TensorRefs<T> in, bool) override {
    const Tensor<T>& x = *in[0];
    check_labels(x.shape(), labels_);
    Tensor<T> logp;
    std::vector<T> scores;
    if (from_logits_) {
      logp = kernels::log_softmax_channels_forward(x);
      scores = true_class_scores(logp, labels_);
    } else {
      scores = true_class_scores(x, labels_);
    }
    selection_ = select_hardest<T>(scores, labels_, k_);
    double acc = 0;
    for (std::size_t i : selection_.indices) {
      acc += from_logits_ ? static_cast<double>(scores[i])
                          : std::log(std::max(static_cast<double>(scores[i]), kLogClamp));
    }
    const double k = static_cast<double>(selection_.indices.size());
    if (report_) {
      report_->loss = -acc / k;
      report_->k_used = selection_.indices.size();
      report_->threshold = from_logits_ ? std::exp(selection_.threshold) : selection_.threshold;
      report_->selected_mask.assign(labels_.size(), 0);
      for (std::size_t i : selection_.indices) report_->selected_mask[i] = 1;
    }
    return Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(-acc / k));
  }

  void backward(TensorRefs<T> in, const Tensor<T>&, const Tensor<T>& dout,
                GradRefs<T> grads) override {
    if (!grads[0]) return;
    const Tensor<T>& x = *in[0];
    const Shape& s = x.shape();
    Tensor<T>& g = *grads[0];
    const double coef = static_cast<double>(dout[0]) / static_cast<double>(selection_.indices.size());
    if (!from_logits_) {
      for (std::size_t i : selection_.indices) {
        const std::size_t off = class_offset(s, i, labels_[i]);
        const double p = x[off];
        if (p > kLogClamp) g[off] += static_cast<T>(-coef / p);
      }
      return;
    }
    // d(-log softmax_y)/dlogit_c = softmax_c - [c == y]
    for (std::size_t i : selection_.indices) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, static_cast<double>(x[class_offset(s, i, c)]));
      double z = 0;
      for (int c = 0; c < s.c; ++c) z += std::exp(x[class_offset(s, i, c)] - mx);
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = class_offset(s, i, c);
        const double p = std::exp(x[off] - mx) / z;
        g[off] += static_cast<T>(coef * (p - (c == labels_[i] ? 1.0 : 0.0)));
      }
    }
  }

 private:
  std::vector<std::uint8_t> labels_;
  std::size_t k_;
  bool from_logits_;
  std::shared_ptr<LossReport> report_;
  Selection selection_;
};

}  // namespace detail

template <typename T>
struct LossNode {
  Var<T> loss;
  std::shared_ptr<const LossReport> report;
};

/// Loss on class probabilities (N x c x H x W); log is clamped at 1e-12.
template <typename T>
LossNode<T> bootstrapped_ce(Tape<T>& tape, const Var<T>& probs, std::span<const std::uint8_t> labels,
                            std::size_t k) {
  auto report = std::make_shared<LossReport>();
  Var<T> v = tape.apply(std::make_unique<detail::BootstrappedCEOp<T>>(
                            std::vector<std::uint8_t>(labels.begin(), labels.end()), k, false, report),
                        {&probs});
  return {std::move(v), std::move(report)};
}

/// Same selection and value, evaluated from logits through a log-softmax;
/// used for training so that saturated wrong predictions keep a gradient.
template <typename T>
LossNode<T> bootstrapped_ce_logits(Tape<T>& tape, const Var<T>& logits,
                                   std::span<const std::uint8_t> labels, std::size_t k) {
  auto report = std::make_shared<LossReport>();
  Var<T> v = tape.apply(std::make_unique<detail::BootstrappedCEOp<T>>(
                            std::vector<std::uint8_t>(labels.begin(), labels.end()), k, true, report),
                        {&logits});
  return {std::move(v), std::move(report)};
}

/// Tape-free evaluation on a probability tensor.
template <typename T>
LossReport bootstrapped_ce_report(const Tensor<T>& probs, std::span<const std::uint8_t> labels,
                                  std::size_t k) {
  Tape<T> tape;
  Var<T> p = tape.input(probs);
  auto node = bootstrapped_ce(tape, p, labels, k);
  return *node.report;
}

}  // namespace frrn

#pragma once

// Finite-difference gradient checks for every differentiable op and for the
// RU/FRRU composites, in double precision.
//
// Each trial builds random inputs and parameters, reduces the op output to a
// scalar through a random weighted sum, and compares the tape gradient with
// central differences (h = 1e-5). The error of one tensor is
// max|a - n| / max(max|n|, max|a|, 1e-10); a trial reports the worst tensor.
// Coordinates whose one-sided differences disagree (a ReLU/max-pool/top-K
// decision flipped inside [x - h, x + h]) are redrawn.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "frrn/layers.hpp"
#include "frrn/loss.hpp"
#include "frrn/ops.hpp"

namespace frrn {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckResult {
  std::string op;
  int trials = 0;
  double max_rel_error = 0;
  int checked_coordinates = 0;
  int redrawn_coordinates = 0;
  bool passed = false;
};

namespace gradcheck_detail {

using D = double;

/// ReLU whose backward is scaled by 1.5; exists only to prove the checker
/// catches a wrong gradient.
class FaultyReluOp final : public Op<D> {
 public:
  std::string_view name() const override { return "faulty_relu"; }
  Tensor<D> forward(TensorRefs<D> in, bool) override { return kernels::relu_forward(*in[0]); }
  void backward(TensorRefs<D> in, const Tensor<D>&, const Tensor<D>& dout, GradRefs<D> g) override {
    if (!g[0]) return;
    const Tensor<D>& x = *in[0];
    for (std::size_t i = 0; i < x.size(); ++i) (*g[0])[i] += x[i] > 0 ? 1.5 * dout[i] : 0.0;
  }
};

using Builder = std::function<Var<D>(Tape<D>&, std::vector<Var<D>>&, ParamStore<D>&)>;

struct Case {
  std::vector<Tensor<D>> inputs;
  ParamStore<D> params;
  Builder build;
};

using Rng = std::mt19937_64;

inline int pick(Rng& rng, std::initializer_list<int> options) {
  std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
  return *(options.begin() + d(rng));
}

/// Values bounded away from zero so ReLU kinks sit far from the samples.
inline Tensor<D> away_from_zero(Shape s, Rng& rng) {
  Tensor<D> t = Tensor<D>::uniform(s, rng, 0.05, 1.0);
  std::bernoulli_distribution neg(0.5);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (neg(rng)) t[i] = -t[i];
  }
  return t;
}

inline void add_conv(ParamStore<D>& p, const std::string& name, int cout, int cin, int k, bool bias, Rng& rng) {
  p.add(name + ".weight", Tensor<D>::randn(Shape{cout, cin, k, k}, rng, 1.0 / std::sqrt(double(cin * k * k))));
  if (bias) p.add(name + ".bias", Tensor<D>::randn(Shape{1, cout, 1, 1}, rng, 0.5));
}

inline void add_bn(ParamStore<D>& p, const std::string& name, int c, Rng& rng) {
  p.add(name + ".gamma", Tensor<D>::uniform(Shape{1, c, 1, 1}, rng, 0.5, 1.5));
  p.add(name + ".beta", Tensor<D>::randn(Shape{1, c, 1, 1}, rng, 0.3));
  p.add(name + ".running_mean", Tensor<D>::randn(Shape{1, c, 1, 1}, rng, 0.3), false);
  p.add(name + ".running_var", Tensor<D>::uniform(Shape{1, c, 1, 1}, rng, 0.5, 2.0), false);
}

inline Case make_case(const std::string& op, Rng& rng) {
  Case c;
  const int n = pick(rng, {1, 2});
  const int ch = pick(rng, {1, 2, 3, 4});
  const int h = pick(rng, {4, 6, 8});
  const int w = pick(rng, {4, 6, 8});
  const Shape s{n, ch, h, w};
  if (op == "conv2d" || op == "conv2d_strided") {
    const int k = op == "conv2d" ? pick(rng, {1, 3, 5}) : 3;
    const int stride = op == "conv2d" ? 1 : 2;
    const bool bias = std::bernoulli_distribution(0.5)(rng);
    const int cout = pick(rng, {1, 2, 3});
    add_conv(c.params, "conv", cout, ch, k, bias, rng);
    c.inputs.push_back(Tensor<D>::randn(s, rng));
    c.build = [stride, bias](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>& p) {
      return conv2d(t, in[0], p.get("conv.weight"), bias ? &p.get("conv.bias") : nullptr, stride);
    };
  } else if (op == "batch_norm_train" || op == "batch_norm_infer") {
    const Mode mode = op == "batch_norm_train" ? Mode::Train : Mode::Infer;
    add_bn(c.params, "bn", ch, rng);
    c.inputs.push_back(Tensor<D>::randn(s, rng, 2.0));
    c.build = [mode](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>& p) {
      return batch_norm(t, in[0], bn_params(p, "bn"), mode);
    };
  } else if (op == "relu") {
    c.inputs.push_back(away_from_zero(s, rng));
    c.build = [](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) { return relu(t, in[0]); };
  } else if (op == "max_pool") {
    const int f = pick(rng, {2, 4});
    c.inputs.push_back(Tensor<D>::randn(Shape{n, ch, 2 * f, 4 * f}, rng));
    c.build = [f](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) { return max_pool(t, in[0], f); };
  } else if (op == "unpool_repeat" || op == "upsample_bilinear") {
    const int f = pick(rng, {2, 4});
    c.inputs.push_back(Tensor<D>::randn(s, rng));
    const bool repeat = op == "unpool_repeat";
    c.build = [f, repeat](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) {
      return repeat ? unpool_repeat(t, in[0], f) : upsample_bilinear(t, in[0], f);
    };
  } else if (op == "concat_channels") {
    c.inputs.push_back(Tensor<D>::randn(s, rng));
    c.inputs.push_back(Tensor<D>::randn(Shape{n, pick(rng, {1, 2, 3}), h, w}, rng));
    c.build = [](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) { return concat_channels(t, in[0], in[1]); };
  } else if (op == "add") {
    c.inputs.push_back(Tensor<D>::randn(s, rng));
    c.inputs.push_back(Tensor<D>::randn(s, rng));
    c.build = [](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) { return add(t, in[0], in[1]); };
  } else if (op == "scale") {
    const double f = std::uniform_real_distribution<double>(-2, 2)(rng);
    c.inputs.push_back(Tensor<D>::randn(s, rng));
    c.build = [f](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) { return scale(t, in[0], f); };
  } else if (op == "softmax_channels") {
    c.inputs.push_back(Tensor<D>::randn(Shape{n, ch + 1, h, w}, rng, 2.0));
    c.build = [](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) { return softmax_channels(t, in[0]); };
  } else if (op == "sum") {
    c.inputs.push_back(Tensor<D>::randn(s, rng));
    c.build = [](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) { return sum(t, in[0]); };
  } else if (op == "bootstrapped_ce" || op == "bootstrapped_ce_logits") {
    const bool logits = op == "bootstrapped_ce_logits";
    const Shape ps{n, ch + 1, h, w};
    c.inputs.push_back(logits ? Tensor<D>::randn(ps, rng, 2.0) : Tensor<D>::uniform(ps, rng, 0.05, 1.0));
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n) * h * w);
    std::uniform_int_distribution<int> cls(0, ch);
    std::bernoulli_distribution is_void(0.2);
    for (auto& l : labels) l = is_void(rng) ? kVoidLabel : static_cast<std::uint8_t>(cls(rng));
    labels[0] = 0;
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, labels.size())(rng);
    c.build = [labels, k, logits](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) {
      return logits ? bootstrapped_ce_logits(t, in[0], labels, k).loss : bootstrapped_ce(t, in[0], labels, k).loss;
    };
  } else if (op == "ru") {
    const int rc = pick(rng, {2, 3});
    add_conv(c.params, "ru.conv1", rc, rc, 3, false, rng);
    add_bn(c.params, "ru.bn1", rc, rng);
    add_conv(c.params, "ru.conv2", rc, rc, 3, false, rng);
    add_bn(c.params, "ru.bn2", rc, rng);
    c.inputs.push_back(Tensor<D>::randn(Shape{2, rc, h, w}, rng));
    c.build = [rc](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>& p) {
      return ru_forward(t, in[0], RUSpec{rc}, p, "ru", Mode::Train);
    };
  } else if (op == "frru") {
    const int sc = pick(rng, {1, 2, 4});
    const int res = 2, pool_in = pick(rng, {2, 3}), pool_out = pick(rng, {2, 3});
    add_conv(c.params, "frru.conv1", pool_out, pool_in + res, 3, false, rng);
    add_bn(c.params, "frru.bn1", pool_out, rng);
    add_conv(c.params, "frru.conv2", pool_out, pool_out, 3, false, rng);
    add_bn(c.params, "frru.bn2", pool_out, rng);
    add_conv(c.params, "frru.res", res, pool_out, 1, true, rng);
    const int zh = 8, zw = 8;
    c.inputs.push_back(Tensor<D>::randn(Shape{2, res, zh, zw}, rng));
    c.inputs.push_back(Tensor<D>::randn(Shape{2, pool_in, zh / sc, zw / sc}, rng));
    c.build = [sc, pool_out, res](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>& p) {
      auto r = frru_forward(t, in[0], in[1], FRRUSpec{pool_out, res, sc}, p, "frru", Mode::Train);
      // both streams feed the scalar objective
      Var<D> zs = sum(t, r.z);
      Var<D> ys = sum(t, scale(t, r.y, 0.7));
      return add(t, zs, ys);
    };
  } else if (op == "faulty_relu") {
    c.inputs.push_back(away_from_zero(s, rng));
    c.build = [](Tape<D>& t, std::vector<Var<D>>& in, ParamStore<D>&) {
      return t.apply(std::make_unique<FaultyReluOp>(), {&in[0]});
    };
  } else {
    throw std::invalid_argument("unknown gradcheck op '" + op + "'");
  }
  return c;
}

}  // namespace gradcheck_detail

/// Ops covered by `--ops all`.
inline const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops{
      "conv2d",   "conv2d_strided", "batch_norm_train", "batch_norm_infer", "relu",
      "max_pool", "unpool_repeat",  "upsample_bilinear", "concat_channels", "add",
      "scale",    "softmax_channels", "sum",            "bootstrapped_ce",  "bootstrapped_ce_logits",
      "ru",       "frru"};
  return ops;
}

inline bool is_gradcheck_op(const std::string& name) {
  const auto& ops = gradcheck_ops();
  return name == "faulty_relu" || std::find(ops.begin(), ops.end(), name) != ops.end();
}

/// Largest per-tensor relative error of one random instance of `op`.
inline double gradcheck_trial(const std::string& op, std::mt19937_64& rng, int* checked = nullptr,
                              int* redrawn = nullptr, int max_coords_per_tensor = 48) {
  using namespace gradcheck_detail;
  Case c = make_case(op, rng);
  Tensor<D> weights;

  auto objective = [&](std::vector<Tensor<D>>* input_grads, bool fill_grads) -> double {
    Tape<D> tape;
    std::vector<Var<D>> vars;
    for (const auto& t : c.inputs) vars.push_back(tape.input(t, true));
    Var<D> out = c.build(tape, vars, c.params);
    if (weights.empty()) weights = Tensor<D>::uniform(out.shape(), rng, -1.0, 1.0);
    Var<D> loss = weighted_sum(tape, out, weights);
    const double v = loss.value()[0];
    if (fill_grads) {
      c.params.zero_grad();
      tape.backward_full(loss);
      for (const auto& var : vars) input_grads->push_back(tape.grad(var));
    }
    return v;
  };

  std::vector<Tensor<D>> input_grads;
  const double f0 = objective(&input_grads, true);
  struct Target {
    Tensor<D>* value;
    Tensor<D> analytic;
  };
  std::vector<Target> targets;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) targets.push_back({&c.inputs[i], input_grads[i]});
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    if (c.params[i].trainable) targets.push_back({&c.params[i].value, c.params[i].grad});
  }

  const double h = kGradcheckStep;
  double worst = 0;
  for (auto& tg : targets) {
    const std::size_t size = tg.value->size();
    std::vector<std::size_t> coords(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    double max_diff = 0, max_num = 0, max_ana = 0;
    int used = 0;
    for (std::size_t idx : coords) {
      if (used >= max_coords_per_tensor) break;
      D& x = (*tg.value)[idx];
      const D saved = x;
      x = saved + h;
      const double fp = objective(nullptr, false);
      x = saved - h;
      const double fm = objective(nullptr, false);
      x = saved;
      const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
      const double numeric = (fp - fm) / (2 * h);
      if (std::abs(fwd - bwd) > 1e-3 * std::max(1.0, std::abs(numeric))) {
        if (redrawn) ++*redrawn;
        continue;
      }
      const double analytic = tg.analytic[idx];
      max_diff = std::max(max_diff, std::abs(analytic - numeric));
      max_num = std::max(max_num, std::abs(numeric));
      max_ana = std::max(max_ana, std::abs(analytic));
      ++used;
    }
    if (checked) *checked += used;
    worst = std::max(worst, max_diff / std::max({max_num, max_ana, 1e-10}));
  }
  return worst;
}

inline GradcheckResult gradcheck_op(const std::string& op, int trials, std::uint64_t seed,
                                    double tolerance = kGradcheckTolerance) {
  if (!is_gradcheck_op(op)) throw std::invalid_argument("unknown gradcheck op '" + op + "'");
  if (trials < 1) throw std::invalid_argument("gradcheck needs at least one trial");
  GradcheckResult r{op, trials, 0, 0, 0, false};
  std::uint64_t mix = 1469598103934665603ull;  // FNV-1a of the op name
  for (char ch : op) mix = (mix ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
  std::mt19937_64 rng(seed ^ mix);
  for (int t = 0; t < trials; ++t) {
    r.max_rel_error = std::max(r.max_rel_error, gradcheck_trial(op, rng, &r.checked_coordinates, &r.redrawn_coordinates));
  }
  r.passed = r.max_rel_error <= tolerance;
  return r;
}

}  // namespace frrn

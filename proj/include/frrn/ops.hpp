#pragma once

// Recordable ops. Each free function applies its op to the tape and returns
// the handle of the new node.

#include <type_traits>
#include <memory>
#include <string>

#include "frrn/kernels.hpp"
#include "frrn/tape.hpp"

namespace frrn {

enum class Mode { Train, Infer };

template <typename T>
struct BatchNormParams {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  Parameter<T>* running_mean = nullptr;
  Parameter<T>* running_var = nullptr;
};

namespace detail {

template <typename T>
class Conv2dOp final : public Op<T> {
 public:
  Conv2dOp(Parameter<T>* weight, Parameter<T>* bias, int stride, int pad)
      : weight_(weight), bias_(bias), stride_(stride), pad_(pad) {}
  std::string_view name() const override { return "conv2d"; }
  bool has_trainable_params() const override {
    return weight_->trainable || (bias_ != nullptr && bias_->trainable);
  }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    return kernels::conv2d_forward(*in[0], weight_->value, bias_ ? &bias_->value : nullptr, stride_,
                                   pad_);
  }
  void backward(TensorRefs<T> in, const Tensor<T>&, const Tensor<T>& dout,
                GradRefs<T> grads) override {
    kernels::conv2d_backward(*in[0], weight_->value, dout, stride_, pad_, grads[0],
                             weight_->trainable ? &weight_->grad : nullptr,
                             bias_ && bias_->trainable ? &bias_->grad : nullptr);
  }

 private:
  Parameter<T>* weight_;
  Parameter<T>* bias_;
  int stride_, pad_;
};

template <typename T>
class BatchNormOp final : public Op<T> {
 public:
  BatchNormOp(BatchNormParams<T> p, Mode mode) : p_(p), mode_(mode) {}
  std::string_view name() const override { return "batch_norm"; }
  bool has_trainable_params() const override { return p_.gamma->trainable || p_.beta->trainable; }
  Tensor<T> forward(TensorRefs<T> in, bool recompute) override {
    const Tensor<T>& x = *in[0];
    if (mode_ == Mode::Infer) {
      return kernels::batch_norm_infer_forward(x, p_.gamma->value, p_.beta->value,
                                               p_.running_mean->value, p_.running_var->value);
    }
    Tensor<T> y = kernels::batch_norm_train_forward(x, p_.gamma->value, p_.beta->value, stats_);
    if (!recompute) {
      kernels::batch_norm_update_running(stats_, static_cast<std::size_t>(x.shape().n) * x.shape().plane(),
                                         p_.running_mean->value, p_.running_var->value);
    }
    return y;
  }
  void backward(TensorRefs<T> in, const Tensor<T>&, const Tensor<T>& dout,
                GradRefs<T> grads) override {
    Tensor<T>* dg = p_.gamma->trainable ? &p_.gamma->grad : nullptr;
    Tensor<T>* db = p_.beta->trainable ? &p_.beta->grad : nullptr;
    if (mode_ == Mode::Infer) {
      kernels::batch_norm_infer_backward(*in[0], p_.gamma->value, p_.running_mean->value,
                                         p_.running_var->value, dout, grads[0], dg, db);
    } else {
      kernels::batch_norm_train_backward(*in[0], p_.gamma->value, stats_, dout, grads[0], dg, db);
    }
  }

 private:
  BatchNormParams<T> p_;
  Mode mode_;
  kernels::BatchStats<T> stats_;
};

template <typename T>
class ReluOp final : public Op<T> {
 public:
  std::string_view name() const override { return "relu"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override { return kernels::relu_forward(*in[0]); }
  void backward(TensorRefs<T> in, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    if (g[0]) kernels::relu_backward(*in[0], dout, *g[0]);
  }
};

template <typename T>
class MaxPoolOp final : public Op<T> {
 public:
  explicit MaxPoolOp(int factor) : factor_(factor) {}
  std::string_view name() const override { return "max_pool"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    return kernels::max_pool_forward(*in[0], factor_);
  }
  void backward(TensorRefs<T> in, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    if (g[0]) kernels::max_pool_backward(*in[0], dout, factor_, *g[0]);
  }

 private:
  int factor_;
};

template <typename T>
class UnpoolRepeatOp final : public Op<T> {
 public:
  explicit UnpoolRepeatOp(int factor) : factor_(factor) {}
  std::string_view name() const override { return "unpool_repeat"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    return kernels::unpool_repeat_forward(*in[0], factor_);
  }
  void backward(TensorRefs<T>, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    if (g[0]) kernels::unpool_repeat_backward(dout, factor_, *g[0]);
  }

 private:
  int factor_;
};

template <typename T>
class UpsampleBilinearOp final : public Op<T> {
 public:
  explicit UpsampleBilinearOp(int factor) : factor_(factor) {}
  std::string_view name() const override { return "upsample_bilinear"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    return kernels::upsample_bilinear_forward(*in[0], factor_);
  }
  void backward(TensorRefs<T>, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    if (g[0]) kernels::upsample_bilinear_backward(dout, factor_, *g[0]);
  }

 private:
  int factor_;
};

template <typename T>
class ConcatOp final : public Op<T> {
 public:
  std::string_view name() const override { return "concat_channels"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    return kernels::concat_channels_forward(*in[0], *in[1]);
  }
  void backward(TensorRefs<T> in, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    kernels::concat_channels_backward(dout, g[0], g[1], in[0]->shape().c);
  }
};

template <typename T>
class AddOp final : public Op<T> {
 public:
  std::string_view name() const override { return "add"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override { return kernels::add_forward(*in[0], *in[1]); }
  void backward(TensorRefs<T>, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    if (g[0]) kernels::accumulate(*g[0], dout);
    if (g[1]) kernels::accumulate(*g[1], dout);
  }
};

template <typename T>
class ScaleOp final : public Op<T> {
 public:
  explicit ScaleOp(T factor) : factor_(factor) {}
  std::string_view name() const override { return "scale"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    Tensor<T> y(in[0]->shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor_ * (*in[0])[i];
    return y;
  }
  void backward(TensorRefs<T>, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    if (g[0]) kernels::accumulate(*g[0], dout, factor_);
  }

 private:
  T factor_;
};

template <typename T>
class SoftmaxOp final : public Op<T> {
 public:
  std::string_view name() const override { return "softmax_channels"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    return kernels::softmax_channels_forward(*in[0]);
  }
  void backward(TensorRefs<T>, const Tensor<T>& out, const Tensor<T>& dout, GradRefs<T> g) override {
    if (g[0]) kernels::softmax_channels_backward(out, dout, *g[0]);
  }
};

/// Sum of all elements, or the weighted sum <w, x> when weights are given.
template <typename T>
class SumOp final : public Op<T> {
 public:
  SumOp() = default;
  explicit SumOp(Tensor<T> weights) : weights_(std::move(weights)), weighted_(true) {}
  std::string_view name() const override { return weighted_ ? "weighted_sum" : "sum"; }
  Tensor<T> forward(TensorRefs<T> in, bool) override {
    const Tensor<T>& x = *in[0];
    if (weighted_) require_same_shape(x.shape(), weights_.shape(), "weighted_sum");
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += weighted_ ? double(weights_[i]) * x[i] : double(x[i]);
    return Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(s));
  }
  void backward(TensorRefs<T>, const Tensor<T>&, const Tensor<T>& dout, GradRefs<T> g) override {
    if (!g[0]) return;
    for (std::size_t i = 0; i < g[0]->size(); ++i) (*g[0])[i] += weighted_ ? dout[0] * weights_[i] : dout[0];
  }

 private:
  Tensor<T> weights_;
  bool weighted_ = false;
};

}  // namespace detail

/// weight: [Cout, Cin, k, k]; bias may be null.
template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, Parameter<T>& weight, std::type_identity_t<Parameter<T>>* bias,
              int stride = 1, int pad = -1) {
  if (pad < 0) pad = weight.value.shape().h / 2;
  return tape.apply(std::make_unique<detail::Conv2dOp<T>>(&weight, bias, stride, pad), {&x});
}

template <typename T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, BatchNormParams<T> p, Mode mode) {
  return tape.apply(std::make_unique<detail::BatchNormOp<T>>(p, mode), {&x});
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  return tape.apply(std::make_unique<detail::ReluOp<T>>(), {&x});
}

template <typename T>
Var<T> max_pool(Tape<T>& tape, const Var<T>& x, int factor) {
  return tape.apply(std::make_unique<detail::MaxPoolOp<T>>(factor), {&x});
}

template <typename T>
Var<T> unpool_repeat(Tape<T>& tape, const Var<T>& x, int factor) {
  return tape.apply(std::make_unique<detail::UnpoolRepeatOp<T>>(factor), {&x});
}

template <typename T>
Var<T> upsample_bilinear(Tape<T>& tape, const Var<T>& x, int factor) {
  return tape.apply(std::make_unique<detail::UpsampleBilinearOp<T>>(factor), {&x});
}

template <typename T>
Var<T> concat_channels(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return tape.apply(std::make_unique<detail::ConcatOp<T>>(), {&a, &b});
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return tape.apply(std::make_unique<detail::AddOp<T>>(), {&a, &b});
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, T factor) {
  return tape.apply(std::make_unique<detail::ScaleOp<T>>(factor), {&x});
}

template <typename T>
Var<T> softmax_channels(Tape<T>& tape, const Var<T>& x) {
  return tape.apply(std::make_unique<detail::SoftmaxOp<T>>(), {&x});
}

template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  return tape.apply(std::make_unique<detail::SumOp<T>>(), {&x});
}

template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& x, Tensor<T> weights) {
  return tape.apply(std::make_unique<detail::SumOp<T>>(std::move(weights)), {&x});
}

}  // namespace frrn

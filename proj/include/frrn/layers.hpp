#pragma once

// Residual units (RU) and full-resolution residual units (FRRU).
//
// RU_m:    x -> x + [conv3x3 -> BN -> ReLU -> conv3x3 -> BN](x)
// FRRU_m:  (z, y) -> (z', y') with
//            y' = [conv3x3 -> BN -> ReLU]^2 (concat(y, maxpool_s(z)))
//            z' = z + unpool_repeat_s(conv1x1+bias(y'))
//
// Parameter names follow "<stage>.<unit>.<layer>.<tensor>".

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "frrn/ops.hpp"

namespace frrn {

struct RUSpec {
  int channels = 0;
};

struct FRRUSpec {
  int pool_channels = 0;
  int residual_channels = 32;
  int scale = 2;
};

enum class ParamInit { KaimingNormal, Zeros, Ones };

struct ParamDecl {
  std::string name;
  Shape shape;
  bool trainable = true;
  ParamInit init = ParamInit::Zeros;
};

using ParamDecls = std::vector<ParamDecl>;

inline void declare_conv(ParamDecls& out, const std::string& prefix, int cout, int cin, int k,
                         bool bias) {
  out.push_back({prefix + ".weight", Shape{cout, cin, k, k}, true, ParamInit::KaimingNormal});
  if (bias) out.push_back({prefix + ".bias", Shape{1, cout, 1, 1}, true, ParamInit::Zeros});
}

inline void declare_bn(ParamDecls& out, const std::string& prefix, int c) {
  out.push_back({prefix + ".gamma", Shape{1, c, 1, 1}, true, ParamInit::Ones});
  out.push_back({prefix + ".beta", Shape{1, c, 1, 1}, true, ParamInit::Zeros});
  out.push_back({prefix + ".running_mean", Shape{1, c, 1, 1}, false, ParamInit::Zeros});
  out.push_back({prefix + ".running_var", Shape{1, c, 1, 1}, false, ParamInit::Ones});
}

inline void declare_ru(ParamDecls& out, const std::string& prefix, const RUSpec& spec) {
  if (spec.channels < 1) throw ConfigError("RU channels must be >= 1");
  declare_conv(out, prefix + ".conv1", spec.channels, spec.channels, 3, false);
  declare_bn(out, prefix + ".bn1", spec.channels);
  declare_conv(out, prefix + ".conv2", spec.channels, spec.channels, 3, false);
  declare_bn(out, prefix + ".bn2", spec.channels);
}

/// `in_pool_channels` is the channel count of the incoming pooling stream.
inline void declare_frru(ParamDecls& out, const std::string& prefix, int in_pool_channels,
                         const FRRUSpec& spec) {
  if (spec.pool_channels < 1 || spec.residual_channels < 1) {
    throw ConfigError("FRRU channels must be >= 1");
  }
  const int m = spec.pool_channels;
  declare_conv(out, prefix + ".conv1", m, in_pool_channels + spec.residual_channels, 3, false);
  declare_bn(out, prefix + ".bn1", m);
  declare_conv(out, prefix + ".conv2", m, m, 3, false);
  declare_bn(out, prefix + ".bn2", m);
  declare_conv(out, prefix + ".res", spec.residual_channels, m, 1, true);
}

inline std::size_t count_trainable(const ParamDecls& decls) {
  std::size_t n = 0;
  for (const auto& d : decls) {
    if (d.trainable) n += d.shape.numel();
  }
  return n;
}

/// Kaiming-normal (fan-in, ReLU gain) for conv weights; constants otherwise.
template <typename T>
ParamStore<T> init_parameters(const ParamDecls& decls, std::uint64_t seed) {
  ParamStore<T> store;
  std::mt19937_64 rng(seed);
  for (const auto& d : decls) {
    Tensor<T> v(d.shape);
    switch (d.init) {
      case ParamInit::KaimingNormal: {
        const double fan_in = static_cast<double>(d.shape.c) * d.shape.h * d.shape.w;
        v = Tensor<T>::randn(d.shape, rng, static_cast<T>(std::sqrt(2.0 / fan_in)));
        break;
      }
      case ParamInit::Ones:
        v.fill(T(1));
        break;
      case ParamInit::Zeros:
        break;
    }
    store.add(d.name, std::move(v), d.trainable);
  }
  return store;
}

template <typename T>
BatchNormParams<T> bn_params(ParamStore<T>& store, const std::string& prefix) {
  return {&store.get(prefix + ".gamma"), &store.get(prefix + ".beta"),
          &store.get(prefix + ".running_mean"), &store.get(prefix + ".running_var")};
}

/// conv (no bias) -> BN -> optional ReLU.
template <typename T>
Var<T> conv_bn(Tape<T>& tape, const Var<T>& x, ParamStore<T>& store, const std::string& conv,
               const std::string& bn, Mode mode, bool activation) {
  Var<T> h = conv2d(tape, x, store.get(conv + ".weight"), nullptr);
  h = batch_norm(tape, h, bn_params(store, bn), mode);
  if (activation) h = relu(tape, h);
  return h;
}

template <typename T>
Var<T> ru_forward(Tape<T>& tape, const Var<T>& x, const RUSpec& spec, ParamStore<T>& store,
                  const std::string& prefix, Mode mode) {
  if (x.shape().c != spec.channels) {
    throw ShapeError("RU '" + prefix + "': input has " + std::to_string(x.shape().c) +
                     " channels, unit expects " + std::to_string(spec.channels));
  }
  Var<T> h = conv_bn(tape, x, store, prefix + ".conv1", prefix + ".bn1", mode, true);
  h = conv_bn(tape, h, store, prefix + ".conv2", prefix + ".bn2", mode, false);
  return add(tape, x, h);
}

template <typename T>
struct FRRUOutput {
  Var<T> z;  // residual stream, full resolution
  Var<T> y;  // pooling stream, at 1/scale
};

template <typename T>
FRRUOutput<T> frru_forward(Tape<T>& tape, const Var<T>& z, const Var<T>& y, const FRRUSpec& spec,
                           ParamStore<T>& store, const std::string& prefix, Mode mode) {
  const Shape zs = z.shape();
  const Shape ys = y.shape();
  const int s = spec.scale;
  if (zs.c != spec.residual_channels) {
    throw ShapeError("FRRU '" + prefix + "': residual stream has " + std::to_string(zs.c) +
                     " channels, expected " + std::to_string(spec.residual_channels));
  }
  if (s < 1 || zs.h % s != 0 || zs.w % s != 0) {
    throw ShapeError("FRRU '" + prefix + "': residual stream " + zs.str() +
                     " not divisible by scale " + std::to_string(s));
  }
  if (ys.n != zs.n || ys.h != zs.h / s || ys.w != zs.w / s) {
    throw ShapeError("FRRU '" + prefix + "': pooling stream " + ys.str() +
                     " does not match residual stream " + zs.str() + " at scale " + std::to_string(s));
  }
  Var<T> pooled = s > 1 ? max_pool(tape, z, s) : z;
  Var<T> h = concat_channels(tape, y, pooled);
  h = conv_bn(tape, h, store, prefix + ".conv1", prefix + ".bn1", mode, true);
  h = conv_bn(tape, h, store, prefix + ".conv2", prefix + ".bn2", mode, true);
  Var<T> r = conv2d(tape, h, store.get(prefix + ".res.weight"), &store.get(prefix + ".res.bias"), 1, 0);
  if (s > 1) r = unpool_repeat(tape, r, s);
  Var<T> z_next = add(tape, z, r);
  return {std::move(z_next), std::move(h)};
}

}  // namespace frrn

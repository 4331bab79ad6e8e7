#pragma once

// Declarative network descriptions and the forward pass that interprets them.
//
// FRRN layout (both variants):
//   head:  conv5x5 + BN + ReLU, then head_units x RU_base
//   split: conv1x1 + bias -> residual stream z (residual_channels wide);
//          the head output becomes the pooling stream y
//   encoder stages: max pool y by 2, then FRRUs at the new scale
//   decoder stages: unpool y by 2, then FRRUs at the new scale
//   tail:  unpool y to full resolution, concat(y, z), conv1x1 + bias to
//          base channels, tail_units x RU_base, conv1x1 + bias to classes,
//          softmax over channels
//
// The ResNet baseline keeps the same stage layout with RUs in place of FRRUs
// and no residual stream. Each pooling input is carried by a long-range skip
// to the output of the matching unpooling layer, where it is concatenated
// and mapped back to the stage width by a conv1x1 + bias. Encoder stages
// whose width differs from the incoming stream start with a conv1x1 + bias
// adapter.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "frrn/layers.hpp"

namespace frrn {

enum class Arch { FrrnA, FrrnB, FrrnAMini, FrrnBMini, ResnetBaseline, ResnetBaselineMini };
enum class StageKind { Encoder, Decoder };
enum class UnitKind { RU, FRRU };
enum class Upsampling { Repeat, Bilinear };

struct UnitSpec {
  UnitKind kind = UnitKind::FRRU;
  int channels = 0;
};

struct StageSpec {
  std::string name;
  StageKind kind = StageKind::Encoder;
  int scale = 2;
  std::vector<UnitSpec> units;
};

/// Long-range skip of the baseline: the pooling-layer input at `scale`
/// joins the output of the unpooling layer that returns to `scale`.
struct SkipConnection {
  int scale = 1;
};

struct NetworkSpec {
  std::string name;
  int base_channels = 48;
  int residual_channels = 32;
  int head_kernel = 5;
  int head_units = 3;
  int tail_units = 3;
  int num_classes = 2;
  std::vector<StageSpec> stages;
  Upsampling decoder_upsampling = Upsampling::Repeat;
  /// Empty for FRRNs; one entry per pooling level for the baseline.
  std::vector<SkipConnection> skips;

  bool is_baseline() const noexcept { return !skips.empty(); }

  int deepest_scale() const noexcept {
    int s = 1;
    for (const auto& st : stages) s = std::max(s, st.scale);
    return s;
  }
  int pool_count() const noexcept {
    int n = 0;
    for (const auto& st : stages) n += st.kind == StageKind::Encoder ? 1 : 0;
    return n;
  }
  /// Input height and width must be divisible by this.
  int divisor() const noexcept { return deepest_scale(); }
};

using BaselineSpec = NetworkSpec;

inline const char* arch_name(Arch a) {
  switch (a) {
    case Arch::FrrnA: return "frrn-a";
    case Arch::FrrnB: return "frrn-b";
    case Arch::FrrnAMini: return "frrn-a-mini";
    case Arch::FrrnBMini: return "frrn-b-mini";
    case Arch::ResnetBaseline: return "resnet-baseline";
    case Arch::ResnetBaselineMini: return "resnet-baseline-mini";
  }
  return "?";
}

inline const std::vector<Arch>& all_archs() {
  static const std::vector<Arch> archs{Arch::FrrnA,     Arch::FrrnB,          Arch::FrrnAMini,
                                       Arch::FrrnBMini, Arch::ResnetBaseline, Arch::ResnetBaselineMini};
  return archs;
}

inline Arch parse_arch(const std::string& s) {
  for (Arch a : all_archs()) {
    if (s == arch_name(a)) return a;
  }
  throw ConfigError("unknown architecture '" + s +
                    "' (expected frrn-a, frrn-b, frrn-a-mini, frrn-b-mini, resnet-baseline, "
                    "resnet-baseline-mini)");
}

/// Checks the stage-ordering invariants.
inline void validate(const NetworkSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  int scale = 1;
  bool decoding = false;
  for (const auto& st : spec.stages) {
    if (st.kind == StageKind::Encoder) {
      if (decoding) throw ConfigError(spec.name + ": encoder stage '" + st.name + "' after decoder");
      if (st.scale != scale * 2) throw ConfigError(spec.name + ": encoder scales must double");
    } else {
      decoding = true;
      if (st.scale * 2 != scale) throw ConfigError(spec.name + ": decoder scales must halve");
    }
    scale = st.scale;
    for (const auto& u : st.units) {
      const UnitKind want = spec.is_baseline() ? UnitKind::RU : UnitKind::FRRU;
      if (u.kind != want) throw ConfigError(spec.name + ": unexpected unit kind in '" + st.name + "'");
      if (u.channels < 1) throw ConfigError(spec.name + ": unit channels must be >= 1");
    }
  }
  if (scale != 2) throw ConfigError(spec.name + ": decoder must return to scale 2");
  if (spec.is_baseline() && static_cast<int>(spec.skips.size()) != spec.pool_count()) {
    throw ConfigError(spec.name + ": baseline needs one skip per pooling level");
  }
}

namespace detail {

struct StagePlan {
  StageKind kind;
  int scale;
  int units;
  int channels;
};

inline NetworkSpec make_frrn(std::string name, int num_classes, const std::vector<StagePlan>& plan,
                             int divide, UnitKind kind) {
  NetworkSpec spec;
  spec.name = std::move(name);
  spec.num_classes = num_classes;
  spec.base_channels = 48 / divide;
  spec.residual_channels = 32 / divide;
  int enc = 0, dec = 0;
  for (const auto& p : plan) {
    StageSpec st;
    st.kind = p.kind;
    st.scale = p.scale;
    st.name = p.kind == StageKind::Encoder ? "enc" + std::to_string(++enc) : "dec" + std::to_string(++dec);
    st.units.assign(p.units, UnitSpec{kind, p.channels / divide});
    spec.stages.push_back(std::move(st));
  }
  if (kind == UnitKind::RU) {
    for (int s = 1; s < spec.deepest_scale(); s *= 2) spec.skips.push_back({s});
  }
  validate(spec);
  return spec;
}

inline std::vector<StagePlan> frrn_a_plan() {
  using K = StageKind;
  return {{K::Encoder, 2, 3, 96},  {K::Encoder, 4, 4, 192}, {K::Encoder, 8, 2, 384},
          {K::Encoder, 16, 2, 384}, {K::Decoder, 8, 2, 192}, {K::Decoder, 4, 2, 192},
          {K::Decoder, 2, 2, 96}};
}

inline std::vector<StagePlan> frrn_b_plan() {
  using K = StageKind;
  return {{K::Encoder, 2, 3, 96},   {K::Encoder, 4, 4, 192},  {K::Encoder, 8, 2, 384},
          {K::Encoder, 16, 2, 384}, {K::Encoder, 32, 2, 384}, {K::Decoder, 16, 2, 192},
          {K::Decoder, 8, 2, 192},  {K::Decoder, 4, 2, 192},  {K::Decoder, 2, 2, 96}};
}

}  // namespace detail

inline NetworkSpec build_frrn_a(int num_classes) {
  return detail::make_frrn("frrn-a", num_classes, detail::frrn_a_plan(), 1, UnitKind::FRRU);
}

inline NetworkSpec build_frrn_b(int num_classes) {
  return detail::make_frrn("frrn-b", num_classes, detail::frrn_b_plan(), 1, UnitKind::FRRU);
}

inline BaselineSpec build_resnet_baseline(int num_classes) {
  return detail::make_frrn("resnet-baseline", num_classes, detail::frrn_a_plan(), 1, UnitKind::RU);
}

inline NetworkSpec build_network(Arch arch, int num_classes) {
  switch (arch) {
    case Arch::FrrnA: return build_frrn_a(num_classes);
    case Arch::FrrnB: return build_frrn_b(num_classes);
    case Arch::FrrnAMini:
      return detail::make_frrn("frrn-a-mini", num_classes, detail::frrn_a_plan(), 4, UnitKind::FRRU);
    case Arch::FrrnBMini:
      return detail::make_frrn("frrn-b-mini", num_classes, detail::frrn_b_plan(), 4, UnitKind::FRRU);
    case Arch::ResnetBaseline: return build_resnet_baseline(num_classes);
    case Arch::ResnetBaselineMini:
      return detail::make_frrn("resnet-baseline-mini", num_classes, detail::frrn_a_plan(), 4, UnitKind::RU);
  }
  throw ConfigError("unknown architecture");
}

/// Every parameter and running statistic the forward pass of `spec` uses.
inline ParamDecls declare_parameters(const NetworkSpec& spec) {
  ParamDecls d;
  const int base = spec.base_channels;
  declare_conv(d, "head.conv", base, 3, spec.head_kernel, false);
  declare_bn(d, "head.bn", base);
  for (int i = 0; i < spec.head_units; ++i) declare_ru(d, "head." + std::to_string(i), {base});
  if (!spec.is_baseline()) declare_conv(d, "split.conv", spec.residual_channels, base, 1, true);

  int width = base;
  for (const auto& st : spec.stages) {
    if (spec.is_baseline()) {
      const int m = st.units.empty() ? width : st.units.front().channels;
      if (st.kind == StageKind::Decoder) {
        // merge with the skip from the pooling input at this scale; its width is
        // the width that entered the matching encoder pooling layer
        int skip_width = base;
        for (const auto& e : spec.stages) {
          if (e.kind == StageKind::Encoder && e.scale == st.scale && !e.units.empty()) {
            skip_width = e.units.back().channels;
          }
        }
        declare_conv(d, st.name + ".merge", m, width + skip_width, 1, true);
        width = m;
      } else if (m != width) {
        declare_conv(d, st.name + ".adapter", m, width, 1, true);
        width = m;
      }
      for (std::size_t u = 0; u < st.units.size(); ++u) {
        declare_ru(d, st.name + "." + std::to_string(u), {st.units[u].channels});
        width = st.units[u].channels;
      }
    } else {
      for (std::size_t u = 0; u < st.units.size(); ++u) {
        FRRUSpec fs{st.units[u].channels, spec.residual_channels, st.scale};
        declare_frru(d, st.name + "." + std::to_string(u), width, fs);
        width = fs.pool_channels;
      }
    }
  }
  const int merged = spec.is_baseline() ? width + base : width + spec.residual_channels;
  declare_conv(d, "tail.merge", base, merged, 1, true);
  for (int i = 0; i < spec.tail_units; ++i) declare_ru(d, "tail." + std::to_string(i), {base});
  declare_conv(d, "tail.classifier", spec.num_classes, base, 1, true);
  return d;
}

/// Learnable values: conv weights and biases, BN gamma and beta.
inline std::size_t count_parameters(const NetworkSpec& spec) {
  return count_trainable(declare_parameters(spec));
}

/// Trainable parameter totals grouped by stage, in network order.
inline std::vector<std::pair<std::string, std::size_t>> parameter_table(const NetworkSpec& spec) {
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (const auto& decl : declare_parameters(spec)) {
    if (!decl.trainable) continue;
    const std::string stage = decl.name.substr(0, decl.name.find('.'));
    if (rows.empty() || rows.back().first != stage) rows.emplace_back(stage, 0);
    rows.back().second += decl.shape.numel();
  }
  return rows;
}

template <typename T>
ParamStore<T> init_network(const NetworkSpec& spec, std::uint64_t seed) {
  return init_parameters<T>(declare_parameters(spec), seed);
}

/// Finds the architecture whose parameter layout matches `store` exactly.
template <typename T>
std::optional<NetworkSpec> detect_network(const ParamStore<T>& store) {
  const auto* cls = store.find("tail.classifier.weight");
  if (cls == nullptr) return std::nullopt;
  const int classes = cls->value.shape().n;
  if (classes < 2) return std::nullopt;
  for (Arch a : all_archs()) {
    NetworkSpec spec = build_network(a, classes);
    const ParamDecls decls = declare_parameters(spec);
    if (decls.size() != store.size()) continue;
    bool match = true;
    for (std::size_t i = 0; i < decls.size() && match; ++i) {
      match = decls[i].name == store[i].name && decls[i].shape == store[i].value.shape() &&
              decls[i].trainable == store[i].trainable;
    }
    if (match) return spec;
  }
  return std::nullopt;
}

struct ForwardOptions {
  /// Insert a tape cut after every pooling and unpooling layer.
  bool cut_at_stages = false;
};

template <typename T>
struct ForwardResult {
  Var<T> logits;
  Var<T> probs;
  /// Residual-stream shape after every FRRU (empty for the baseline).
  std::vector<Shape> residual_shapes;
};

namespace detail {

template <typename T>
Var<T> conv1x1(Tape<T>& tape, const Var<T>& x, ParamStore<T>& store, const std::string& prefix) {
  return conv2d(tape, x, store.get(prefix + ".weight"), &store.get(prefix + ".bias"), 1, 0);
}

template <typename T>
Var<T> upsample(Tape<T>& tape, const Var<T>& x, Upsampling mode) {
  return mode == Upsampling::Repeat ? unpool_repeat(tape, x, 2) : upsample_bilinear(tape, x, 2);
}

}  // namespace detail

/// Records the forward pass on `tape`; input is N x 3 x H x W with H and W
/// divisible by spec.divisor().
template <typename T>
ForwardResult<T> forward(const NetworkSpec& spec, ParamStore<T>& store, Tape<T>& tape,
                         const Var<T>& input, Mode mode, const ForwardOptions& opts = {}) {
  const Shape in = input.shape();
  if (in.c != 3) throw ShapeError("forward: expected 3 input channels, got " + in.str());
  const int div = spec.divisor();
  if (in.h % div != 0 || in.w % div != 0) {
    throw ShapeError("forward: " + spec.name + " needs height and width divisible by " +
                     std::to_string(div) + ", got " + in.str());
  }
  auto maybe_cut = [&] {
    if (opts.cut_at_stages) tape.cut();
  };

  ForwardResult<T> out;
  Var<T> x = conv2d(tape, input, store.get("head.conv.weight"), nullptr);
  x = relu(tape, batch_norm(tape, x, bn_params(store, "head.bn"), mode));
  for (int i = 0; i < spec.head_units; ++i) {
    x = ru_forward(tape, x, RUSpec{spec.base_channels}, store, "head." + std::to_string(i), mode);
  }

  Var<T> y;
  if (spec.is_baseline()) {
    y = std::move(x);
    std::map<int, Var<T>> skips;
    for (const auto& st : spec.stages) {
      if (st.kind == StageKind::Encoder) {
        skips[st.scale / 2] = y;
        y = max_pool(tape, y, 2);
        maybe_cut();
        if (store.find(st.name + ".adapter.weight") != nullptr) {
          y = detail::conv1x1(tape, y, store, st.name + ".adapter");
        }
      } else {
        y = detail::upsample(tape, y, spec.decoder_upsampling);
        maybe_cut();
        y = detail::conv1x1(tape, concat_channels(tape, y, skips.at(st.scale)), store, st.name + ".merge");
      }
      for (std::size_t u = 0; u < st.units.size(); ++u) {
        y = ru_forward(tape, y, RUSpec{st.units[u].channels}, store, st.name + "." + std::to_string(u), mode);
      }
    }
    y = detail::upsample(tape, y, spec.decoder_upsampling);
    maybe_cut();
    x = concat_channels(tape, y, skips.at(1));
    skips.clear();
  } else {
    Var<T> z = detail::conv1x1(tape, x, store, "split.conv");
    y = std::move(x);
    for (const auto& st : spec.stages) {
      y = st.kind == StageKind::Encoder ? max_pool(tape, y, 2)
                                        : detail::upsample(tape, y, spec.decoder_upsampling);
      maybe_cut();
      for (std::size_t u = 0; u < st.units.size(); ++u) {
        FRRUSpec fs{st.units[u].channels, spec.residual_channels, st.scale};
        auto r = frru_forward(tape, z, y, fs, store, st.name + "." + std::to_string(u), mode);
        z = std::move(r.z);
        y = std::move(r.y);
        out.residual_shapes.push_back(z.shape());
      }
    }
    y = detail::upsample(tape, y, spec.decoder_upsampling);
    maybe_cut();
    x = concat_channels(tape, y, z);
  }
  y.reset();

  x = detail::conv1x1(tape, x, store, "tail.merge");
  for (int i = 0; i < spec.tail_units; ++i) {
    x = ru_forward(tape, x, RUSpec{spec.base_channels}, store, "tail." + std::to_string(i), mode);
  }
  out.logits = detail::conv1x1(tape, x, store, "tail.classifier");
  out.probs = softmax_channels(tape, out.logits);
  return out;
}

}  // namespace frrn

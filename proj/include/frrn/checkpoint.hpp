#pragma once

// Binary parameter checkpoints.
//
//   "FRRNCKPT"                       8 bytes
//   version                          u32 (= 1)
//   scalar width                     u32 (4 = float32, 8 = float64)
//   record count                     u32
//   per record:
//     name length, name bytes        u32, UTF-8
//     shape                          4 x u32 (N, C, H, W)
//     trainable                      u8
//     values                         numel scalars
//   per trainable record, same order:
//     ADAM step                      u64
//     first moment, second moment    2 x numel scalars
//
// All integers and scalars are little-endian.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "frrn/params.hpp"

namespace frrn {

inline constexpr char kCheckpointMagic[8] = {'F', 'R', 'R', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename U>
void write_le(std::ostream& os, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw CheckpointError("checkpoint: unexpected end of file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U v;
  std::memcpy(&v, bytes, sizeof(U));
  return v;
}

template <typename T>
void write_values(std::ostream& os, const Tensor<T>& t) {
  for (T v : t.values()) write_le(os, v);
}

template <typename T>
Tensor<T> read_values(std::istream& is, Shape shape, std::uint32_t width) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) {
    v = width == 4 ? static_cast<T>(read_le<float>(is)) : static_cast<T>(read_le<double>(is));
  }
  return t;
}

}  // namespace detail

template <typename T>
void write_checkpoint(std::ostream& os, const ParamStore<T>& params) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_le<std::uint32_t>(os, sizeof(T));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape& s = p.value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    detail::write_le<std::uint8_t>(os, p.trainable ? 1 : 0);
    detail::write_values(os, p.value);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.trainable) continue;
    detail::write_le<std::uint64_t>(os, p.adam.step);
    detail::write_values(os, p.adam.m);
    detail::write_values(os, p.adam.v);
  }
}

/// Reads a checkpoint into a fresh store; values are converted when the
/// stored scalar width differs from T.
template <typename T>
ParamStore<T> read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError("checkpoint: bad magic (not an FRRNCKPT file)");
  }
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto width = detail::read_le<std::uint32_t>(is);
  if (width != 4 && width != 8) throw CheckpointError("checkpoint: bad scalar width " + std::to_string(width));
  const auto count = detail::read_le<std::uint32_t>(is);
  ParamStore<T> store;
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto len = detail::read_le<std::uint32_t>(is);
    if (len > 4096) throw CheckpointError("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("checkpoint: unexpected end of file");
    Shape s;
    s.n = static_cast<int>(detail::read_le<std::uint32_t>(is));
    s.c = static_cast<int>(detail::read_le<std::uint32_t>(is));
    s.h = static_cast<int>(detail::read_le<std::uint32_t>(is));
    s.w = static_cast<int>(detail::read_le<std::uint32_t>(is));
    const bool trainable = detail::read_le<std::uint8_t>(is) != 0;
    store.add(std::move(name), detail::read_values<T>(is, s, width), trainable);
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (!p.trainable) continue;
    p.adam.step = detail::read_le<std::uint64_t>(is);
    p.adam.m = detail::read_values<T>(is, p.value.shape(), width);
    p.adam.v = detail::read_values<T>(is, p.value.shape(), width);
  }
  return store;
}

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  write_checkpoint(os, params);
  if (!os) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

template <typename T>
ParamStore<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  try {
    return read_checkpoint<T>(is);
  } catch (const CheckpointError& e) {
    throw CheckpointError(std::string(e.what()) + " [" + path + "]");
  }
}

/// Copies values and optimizer state from `src` into `dst`; every entry of
/// `dst` must exist in `src` with the same shape.
template <typename T>
void assign_from(ParamStore<T>& dst, const ParamStore<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto& p = dst[i];
    const auto* q = src.find(p.name);
    if (q == nullptr) throw CheckpointError("checkpoint: missing parameter '" + p.name + "'");
    if (!(q->value.shape() == p.value.shape())) {
      throw CheckpointError("checkpoint: shape mismatch for '" + p.name + "': " +
                            q->value.shape().str() + " vs " + p.value.shape().str());
    }
    p.value = q->value;
    if (p.trainable && q->trainable) p.adam = q->adam;
  }
}

}  // namespace frrn

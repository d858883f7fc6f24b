#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sggec/core.hpp"

namespace sggec {

// Dense row-major tensor of 32-bit floats.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> values;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    values.assign(static_cast<size_t>(numel(shape)), 0.0f);
  }

  static int64_t numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }

  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  float& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * cols() + c)]; }
  float at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * cols() + c)]; }

  bool operator==(const Tensor&) const = default;
};

// Named tensor container. On-disk layout (all integers little-endian):
//   magic "SQMD", format version u32, tensor count u32;
//   per tensor: name length u32, UTF-8 name, rank u32, dims u64 each,
//   then 32-bit little-endian IEEE-754 values, row-major.
using TensorMap = std::map<std::string, Tensor>;

namespace detail {

static_assert(sizeof(float) == 4, "require 32-bit float");

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  // This code targets little-endian hosts only.
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("unexpected end of checkpoint file");
  return v;
}

}  // namespace detail

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_tensors(std::ostream& out, const TensorMap& tensors) {
  out.write("SQMD", 4);
  detail::write_le<uint32_t>(out, kCheckpointVersion);
  detail::write_le<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) detail::write_le<uint64_t>(out, static_cast<uint64_t>(d));
    for (float v : t.values) detail::write_le<float>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint stream");
}

inline TensorMap load_tensors(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SQMD", 4) != 0)
    throw DataError("not a checkpoint file (bad magic)");
  uint32_t version = detail::read_le<uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  uint32_t count = detail::read_le<uint32_t>(in);
  TensorMap tensors;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = detail::read_le<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IoError("unexpected end of checkpoint file");
    uint32_t rank = detail::read_le<uint32_t>(in);
    Tensor t;
    t.shape.resize(rank);
    for (uint32_t r = 0; r < rank; ++r)
      t.shape[r] = static_cast<int64_t>(detail::read_le<uint64_t>(in));
    int64_t n = Tensor::numel(t.shape);
    t.values.resize(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) t.values[static_cast<size_t>(k)] = detail::read_le<float>(in);
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

inline void save_tensors_file(const std::string& path, const TensorMap& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  save_tensors(f, tensors);
}

inline TensorMap load_tensors_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  return load_tensors(f);
}

}  // namespace sggec

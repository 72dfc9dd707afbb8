#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgear/data/binary_io.hpp"
#include "sgear/diff/tensor.hpp"

namespace sgear::data {

/// K prototype rows of width `dim`. On disk: "SGLP", u32 version (1), u32 K, u32 dim,
/// then K*dim little-endian float32 values, row-major.
struct PrototypeArray {
  std::uint32_t classes = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  diff::Tensor to_tensor() const {
    return diff::Tensor::from({classes, dim}, std::vector<double>(values.begin(), values.end()));
  }

  static PrototypeArray from_tensor(const diff::Tensor& t) {
    if (t.rank() != 2) throw DimensionError("prototype tensor must be K x d");
    PrototypeArray p;
    p.classes = static_cast<std::uint32_t>(t.dim(0));
    p.dim = static_cast<std::uint32_t>(t.dim(1));
    p.values.assign(t.data().begin(), t.data().end());
    return p;
  }

  bool operator==(const PrototypeArray&) const = default;
};

inline constexpr std::uint32_t kPrototypeFileVersion = 1;

inline std::vector<unsigned char> encode_prototype_file(const PrototypeArray& p) {
  if (p.values.size() != static_cast<std::size_t>(p.classes) * p.dim) {
    throw DimensionError("prototype array size does not match K x d");
  }
  ByteWriter w;
  w.str("SGLP");
  w.u32(kPrototypeFileVersion);
  w.u32(p.classes);
  w.u32(p.dim);
  for (float v : p.values) w.f32(v);
  return w.buffer();
}

inline PrototypeArray decode_prototype_file(std::vector<unsigned char> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic("SGLP");
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kPrototypeFileVersion) {
    throw FormatError("unsupported prototype file version", version_at);
  }
  PrototypeArray p;
  p.classes = r.u32("class count");
  p.dim = r.u32("dimension");
  if (p.classes == 0 || p.dim == 0) throw FormatError("zero extent in prototype header", r.offset());
  const std::size_t n = static_cast<std::size_t>(p.classes) * p.dim;
  if (r.remaining() < n * 4) {
    throw FormatError("truncated payload: header needs " + std::to_string(n) + " floats",
                      r.offset() + r.remaining());
  }
  p.values.resize(n);
  r.read(p.values.data(), n * 4, "payload");
  r.expect_end();
  return p;
}

inline void write_prototype_file(const std::string& path, const PrototypeArray& p) {
  write_file_bytes(path, encode_prototype_file(p));
}

inline PrototypeArray read_prototype_file(const std::string& path) {
  return decode_prototype_file(read_file_bytes(path));
}

}  // namespace sgear::data

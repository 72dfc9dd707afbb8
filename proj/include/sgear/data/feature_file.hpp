#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgear/data/binary_io.hpp"
#include "sgear/diff/tensor.hpp"

namespace sgear::data {

/// Per-clip token features: T frames x `tokens` tokens x `dim` channels, single precision.
///
/// On disk: "SGFT", u32 version (1), u32 T, u32 tokens, u32 dim, then T*tokens*dim
/// little-endian float32 values in (frame, token, channel) order.
struct FeatureArray {
  std::uint32_t frames = 0;
  std::uint32_t tokens = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  std::size_t expected_size() const {
    return static_cast<std::size_t>(frames) * tokens * dim;
  }

  float at(std::size_t t, std::size_t token, std::size_t c) const {
    return values[(t * tokens + token) * dim + c];
  }

  /// Frame `t` as a tokens x dim double tensor.
  diff::Tensor frame(std::size_t t) const {
    const std::size_t n = static_cast<std::size_t>(tokens) * dim;
    std::vector<double> v(values.begin() + static_cast<std::ptrdiff_t>(t * n),
                          values.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
    return diff::Tensor::from({tokens, dim}, std::move(v));
  }

  bool operator==(const FeatureArray&) const = default;
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline std::vector<unsigned char> encode_feature_file(const FeatureArray& f) {
  if (f.values.size() != f.expected_size()) {
    throw DimensionError("feature array holds " + std::to_string(f.values.size()) +
                         " values, header implies " + std::to_string(f.expected_size()));
  }
  ByteWriter w;
  w.str("SGFT");
  w.u32(kFeatureFileVersion);
  w.u32(f.frames);
  w.u32(f.tokens);
  w.u32(f.dim);
  for (float v : f.values) w.f32(v);
  return w.buffer();
}

inline FeatureArray decode_feature_file(std::vector<unsigned char> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic("SGFT");
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kFeatureFileVersion) {
    throw FormatError("unsupported feature file version", version_at);
  }
  FeatureArray f;
  f.frames = r.u32("frame count");
  f.tokens = r.u32("token count");
  f.dim = r.u32("channel count");
  if (f.frames == 0 || f.tokens == 0 || f.dim == 0) {
    throw FormatError("zero extent in feature header", r.offset());
  }
  const std::size_t n = f.expected_size();
  if (r.remaining() < n * 4) {
    throw FormatError("truncated payload: header needs " + std::to_string(n) + " floats, found " +
                          std::to_string(r.remaining() / 4),
                      r.offset() + r.remaining());
  }
  f.values.resize(n);
  r.read(f.values.data(), n * 4, "payload");
  r.expect_end();
  return f;
}

inline void write_feature_file(const std::string& path, const FeatureArray& f) {
  write_file_bytes(path, encode_feature_file(f));
}

inline FeatureArray read_feature_file(const std::string& path) {
  return decode_feature_file(read_file_bytes(path));
}

}  // namespace sgear::data

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sgear/error.hpp"

namespace sgear::data {

// Little-endian primitive encoding. The host is assumed little-endian; a static_assert
// guards that assumption rather than byte-swapping.
static_assert(std::endian::native == std::endian::little, "little-endian host required");

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }

  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void read(void* out, std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(std::string("truncated while reading ") + what, buf_.size());
    }
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read(&v, 4, what);
    return v;
  }
  float f32(const char* what) {
    float v;
    read(&v, 4, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    read(&v, 8, what);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }

  void expect_magic(const char (&magic)[5]) {
    const std::size_t at = pos_;
    if (remaining() < 4 || std::memcmp(buf_.data() + pos_, magic, 4) != 0) {
      throw FormatError(std::string("bad magic, expected '") + magic + "'", at);
    }
    pos_ += 4;
  }

  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(std::to_string(remaining()) + " unexpected trailing bytes", pos_);
    }
  }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'", 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace sgear::data

#pragma once

#include <stdexcept>
#include <string>

namespace sgear {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A computation produced (or was fed) a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A class or element index is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text file. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Input data violates a documented precondition (e.g. a non-stochastic co-occurrence row).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Prediction sets that should describe the same clips do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Metrics requested over an empty or malformed prediction set.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgear

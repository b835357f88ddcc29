#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toad {

// Base of every error the engine raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent run configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing or out-of-range input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Binary file could not be decoded. `offset` is the byte position where
// decoding stopped.
class ParseError : public DataError {
 public:
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kDimension, kRange, kIo };

  ParseError(Kind kind, std::size_t offset, const std::string& what)
      : DataError(what + " (at byte " + std::to_string(offset) + ")"),
        kind_(kind),
        offset_(offset),
        detail_(what) {}

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }
  // Message without the byte-offset suffix.
  const std::string& detail() const { return detail_; }

 private:
  Kind kind_;
  std::size_t offset_;
  std::string detail_;
};

class LabelError : public DataError {
 public:
  using DataError::DataError;
};

// Operand extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input for which an operation is mathematically undefined (zero-norm rows,
// empty positive sets, dead future projection in strict mode).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A kernel produced or received NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace toad

#pragma once

#include <stdexcept>
#include <string>

namespace madv {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes incompatible with an operation.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// Invalid configuration value or inconsistent option combination.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Bad input data (non-finite pixels, empty sets, single-class corpora).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

/// File or serialization failure.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Loss head that cannot supply a gradient.
class UnsupportedHeadError : public Error {
 public:
  explicit UnsupportedHeadError(const std::string& msg) : Error(msg) {}
};

}  // namespace madv

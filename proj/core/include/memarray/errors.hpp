#pragma once

#include <stdexcept>
#include <string>

namespace mema {

// Base of every error raised by the library. The CLI maps the subclasses
// onto exit codes (usage 1, data 2, numeric 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Raised when a label sequence cannot be aligned to the available frames.
// Kept apart from NumericError so callers can skip such utterances.
class UnrealizableError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  enum class Kind { kIo, kVersion, kCorrupt, kShape };
  CheckpointError(Kind kind, const std::string& what)
      : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Raised when a frozen parameter group changed during optimization.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace mema

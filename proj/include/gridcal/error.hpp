#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gridcal {

/// Base class of every error thrown by the library. `code()` is a short,
/// stable, machine-parsable identifier used by the CLI error line.
class Error : public std::runtime_error {
public:
  Error(std::string_view code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  std::string_view code() const noexcept { return code_; }

private:
  std::string_view code_;
};

class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& what) : Error("E_SHAPE", what) {}
};

class FormatError : public Error {
public:
  explicit FormatError(const std::string& what) : Error("E_FORMAT", what) {}
};

class TruncationError : public Error {
public:
  explicit TruncationError(const std::string& what) : Error("E_TRUNCATED", what) {}
};

class InvalidArgument : public Error {
public:
  explicit InvalidArgument(const std::string& what) : Error("E_INVALID_ARGUMENT", what) {}
};

class CapabilityError : public Error {
public:
  explicit CapabilityError(const std::string& what) : Error("E_UNSUPPORTED", what) {}
};

class TrainingError : public Error {
public:
  explicit TrainingError(const std::string& what) : Error("E_TRAINING", what) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error("E_IO", what) {}
};

} // namespace gridcal

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scd {

enum class ErrorKind {
  UnknownColor,
  IndexOutOfRange,
  MissingFile,
  DimensionMismatch,
  EmptyDataset,
  InvalidConfig,
  ShapeMismatch,
  LabelOutOfRange,
  EmptyMatrix,
  OutOfRange,
  NonFinite,
  ConfigError,
  ConfigMismatch,
  IoError,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; `kind()` distinguishes the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // User/config errors map to CLI exit code 1, everything else to 2.
  bool is_user_error() const noexcept {
    switch (kind_) {
      case ErrorKind::MissingFile:
      case ErrorKind::InvalidConfig:
      case ErrorKind::ConfigError:
      case ErrorKind::ConfigMismatch:
      case ErrorKind::EmptyDataset:
      case ErrorKind::UnknownColor:
      case ErrorKind::DimensionMismatch:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace scd

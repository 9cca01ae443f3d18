#pragma once

#include <stdexcept>
#include <string>

namespace mmv {

enum class ErrorKind {
  BadParam,
  DimensionMismatch,
  ZeroColumn,
  NonFinite,
  InvariantViolation,
  NotSPD,
  EmptySupport,
  DegenerateTrace,
  Bracketing,
  Io,
  Config,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` tells callers which
/// contract was broken without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::BadParam: return "BadParam";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ZeroColumn: return "ZeroColumn";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::NotSPD: return "NotSPD";
    case ErrorKind::EmptySupport: return "EmptySupport";
    case ErrorKind::DegenerateTrace: return "DegenerateTrace";
    case ErrorKind::Bracketing: return "Bracketing";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace mmv

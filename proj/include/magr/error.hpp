#pragma once

#include <stdexcept>
#include <string>

namespace magr {

enum class ErrorKind {
  DimensionMismatch,
  InvalidArgument,
  Io,
  Parse,
  Config,
  Numeric,
  Infeasible,
};

const char* to_string(ErrorKind kind);

/// Structured error carrying a category alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "dimension mismatch";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Infeasible: return "infeasible";
  }
  return "error";
}

}  // namespace magr

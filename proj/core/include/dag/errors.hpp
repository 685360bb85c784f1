#pragma once

#include <stdexcept>
#include <string>

namespace dag {

// Error categories surfaced by the library. The CLI maps each category onto
// a process exit code (see exit_code()).
enum class ErrorKind {
  Usage,          // bad flags, malformed config, unsupported variant
  Parse,          // malformed text record
  Validation,     // value outside its domain
  Structural,     // mismatched counts or widths
  Shape,          // tensor dimensions incompatible with the configuration
  Step,           // diffusion step outside the schedule
  Index,          // token/level index out of range
  DegenerateCloud,
  Size,           // too few points for the configured hierarchy
  PoolingConfig,
  Dataset,
  Checkpoint,
  Numeric,        // NaN/Inf during training
  UnsupportedVariant,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 0 success, 1 usage, 2 data, 3 checkpoint, 4 numeric abort.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::UnsupportedVariant:
    case ErrorKind::PoolingConfig:
      return 1;
    case ErrorKind::Checkpoint:
      return 3;
    case ErrorKind::Numeric:
      return 4;
    default:
      return 2;
  }
}

const char* to_string(ErrorKind kind) noexcept;

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace dag

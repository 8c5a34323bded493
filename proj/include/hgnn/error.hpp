#pragma once

#include <stdexcept>
#include <string>

namespace hgnn {

/// Broad failure classes. The CLI maps these to exit codes and to the
/// `ERROR <code>:` prefix.
enum class ErrorCode {
  Io,
  Format,
  Config,
  Shape,
  NonFinite,
  Precondition,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Config: return "config";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::Precondition: return "precondition";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hgnn

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace closer {

enum class ErrorCode {
  kShapeMismatch,
  kDomain,            // e.g. log of a non-positive value
  kDegenerateInput,   // vector norm below the rejection threshold
  kInvalidArgument,
  kNoPairs,           // loss has an empty pair set
  kNotInRegime,       // IB bound outside the negative-entropy regime
  kNonFinite,
  kFormat,            // malformed file contents
  kIo,
  kFrozenEncoder,     // encoder changed after classifier replacement
  kMissingArtifact,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code in
/// addition to a human-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

// Literal messages are only materialized on failure.
inline void require(bool condition, ErrorCode code, const char* what) {
  if (!condition) fail(code, what);
}

}  // namespace closer

#pragma once

#include <stdexcept>
#include <string>

namespace a3r {

enum class ErrorCode {
  kParse = 1,
  kDimension = 2,
  kIo = 3,
  kInvalidArgument = 4,
  kBadMagic = 5,
  kDType = 6,
  kTruncated = 7,
  kShape = 8,
  kNumeric = 9,
  kState = 10,
};

/// Exception carrying a machine-readable code; the C API maps codes to statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

inline void require(bool cond, ErrorCode code, const char* what) {
  if (!cond) fail(code, what);
}

}  // namespace a3r

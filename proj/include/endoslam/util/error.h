#pragma once

#include <stdexcept>
#include <string>

namespace endoslam {

enum class ErrorCode {
  kInvalidArgument,
  kParse,
  kIo,
  kImageTooSmall,
  kInsufficientData,
  kDanglingReference,
  kUnknownId,
  kDegenerate,
  kEmptyCorpus,
  kEmptyGrid,
  kCameraInsideSurface,
};

const char* to_string(ErrorCode code);

// Exception type used for all contract violations and input errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(to_string(code)) + ": " + what);
}

}  // namespace endoslam

#include "endoslam/util/error.h"

namespace endoslam {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kImageTooSmall: return "image too small";
    case ErrorCode::kInsufficientData: return "insufficient data";
    case ErrorCode::kDanglingReference: return "dangling reference";
    case ErrorCode::kUnknownId: return "unknown id";
    case ErrorCode::kDegenerate: return "degenerate configuration";
    case ErrorCode::kEmptyCorpus: return "empty corpus";
    case ErrorCode::kEmptyGrid: return "empty grid";
    case ErrorCode::kCameraInsideSurface: return "camera inside surface";
  }
  return "unknown error";
}

}  // namespace endoslam

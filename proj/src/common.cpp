#include "plvio/common.hpp"

namespace plvio {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kWindowFull: return "WindowFull";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kInsufficientBaseline: return "InsufficientBaseline";
    case ErrorCode::kDivergedTriangulation: return "DivergedTriangulation";
    case ErrorCode::kNegativeDepth: return "NegativeDepth";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kDegenerateLine: return "DegenerateLine";
    case ErrorCode::kInsufficientViews: return "InsufficientViews";
    case ErrorCode::kSingularInnovation: return "SingularInnovation";
    case ErrorCode::kAllGated: return "AllGated";
    case ErrorCode::kTooFewMatches: return "TooFewMatches";
    case ErrorCode::kDuplicateFrameId: return "DuplicateFrameId";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kDanglingTrackId: return "DanglingTrackId";
    case ErrorCode::kNoOverlap: return "NoOverlap";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

VioError::VioError(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace plvio

#include "regretlab/error.hpp"

namespace regretlab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonConvergent: return "NonConvergent";
    case ErrorCode::kUnstable: return "Unstable";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kPreconditionN: return "PreconditionN";
    case ErrorCode::kSingularGramian: return "SingularGramian";
    case ErrorCode::kDegenerateFeatures: return "DegenerateFeatures";
    case ErrorCode::kReducible: return "Reducible";
    case ErrorCode::kDegenerateGaps: return "DegenerateGaps";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace regretlab

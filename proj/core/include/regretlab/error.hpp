#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace regretlab {

// Failure categories shared by every module. Sentinel-style outcomes
// (unstable cost, overflowing rollouts) are reported through return values,
// not through these.
enum class ErrorCode {
  kInvalidArgument,
  kNonConvergent,
  kUnstable,
  kRankDeficient,
  kPreconditionN,
  kSingularGramian,
  kDegenerateFeatures,
  kReducible,
  kDegenerateGaps,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::kInvalidArgument, message);
}

}  // namespace regretlab

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rigid {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  ColumnNeverObserved,
  PairNeverJointlyObserved,
  NotSymmetric,
  FactorizationFailure,
  RankDeficientGram,
  NotStrictlyConvex,
  PatternsDoNotCoverFeatures,
  InvalidPatternStructure,
  RateUnreachable,
  ParseError,
  TargetHasMissing,
  ZeroVarianceColumn,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ColumnNeverObserved: return "ColumnNeverObserved";
    case ErrorCode::PairNeverJointlyObserved: return "PairNeverJointlyObserved";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::RankDeficientGram: return "RankDeficientGram";
    case ErrorCode::NotStrictlyConvex: return "NotStrictlyConvex";
    case ErrorCode::PatternsDoNotCoverFeatures: return "PatternsDoNotCoverFeatures";
    case ErrorCode::InvalidPatternStructure: return "InvalidPatternStructure";
    case ErrorCode::RateUnreachable: return "RateUnreachable";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TargetHasMissing: return "TargetHasMissing";
    case ErrorCode::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// True for failures caused by the numerics rather than by malformed input.
inline bool is_numerical(ErrorCode code) {
  return code == ErrorCode::FactorizationFailure || code == ErrorCode::RankDeficientGram ||
         code == ErrorCode::NotStrictlyConvex || code == ErrorCode::RateUnreachable;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace rigid

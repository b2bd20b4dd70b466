#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attelig {

enum class ErrorCode {
  // data model
  SchemaMismatch,
  InconsistentMissingness,
  ParseError,
  RuleReferencesMissingCovariate,
  InvalidFoldCount,
  // design / learners
  UnknownCovariate,
  MissingValueInRequiredColumn,
  RankDeficient,
  Separation,
  SingleClass,
  NonPositiveResponse,
  NonConvergence,
  MemberAllFailed,
  // nuisance engine
  InsufficientControls,
  EmptySubset,
  ClipViolation,
  // estimators
  DegenerateAlpha,
  EmptyTreatedEligible,
  ResampleDegenerate,
  // oracle
  ZeroMass,
  InvalidDistribution,
  // configuration / generic
  InvalidConfig,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a stable code so callers
/// (notably the CLI) can map it to an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace attelig

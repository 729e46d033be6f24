#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cohconf {

enum class ErrorCode {
  CycleDetected,
  InvalidEdgeEndpoint,
  DuplicateEdge,
  UnknownClaimId,
  SchemaMismatch,
  InvalidSchema,
  EmptyRisks,
  EmptyScores,
  EmptyValues,
  InvalidArgument,
  MissingFrequency,
  NonFiniteValue,
  NonFiniteGradient,
  NonFiniteLoss,
  DegenerateWeights,
  TooFewProblems,
  InsufficientVariance,
  EmptyClass,
  ParseError,
  ValidationError,
  InvalidConfig,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (notably the CLI) can map it to an exit status without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cohconf

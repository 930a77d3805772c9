#pragma once

#include <stdexcept>
#include <string>

namespace treespec {

// Failure categories, grouped by the exit code the CLI maps them to:
// validation problems -> 2, algorithmic failures -> 3, file I/O -> 4.
enum class ErrorKind {
  // validation
  InvalidArgument,
  TopologyMismatch,
  GenerationTimeout,
  // algorithmic
  ZeroMarginal,
  SingularModel,
  BudgetExceeded,
  UnobservedState,
  DeadRow,
  IllConditionedPair,
  SeparationFailure,
  NonRealSpectrum,
  InsufficientSignal,
  QuartetConflict,
  Unreachable,
  MarginalDegenerate,
  IllConditionedFactor,
  CoverageFailure,
  // i/o
  ParseError,
  IoError,
};

const char* error_kind_name(ErrorKind kind);
int exit_code_for(ErrorKind kind);

class TreespecError : public std::runtime_error {
 public:
  TreespecError(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return exit_code_for(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw TreespecError(kind, message);
}

}  // namespace treespec

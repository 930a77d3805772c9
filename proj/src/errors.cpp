#include "treespec/errors.hpp"

namespace treespec {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::TopologyMismatch: return "TopologyMismatch";
    case ErrorKind::GenerationTimeout: return "GenerationTimeout";
    case ErrorKind::ZeroMarginal: return "ZeroMarginal";
    case ErrorKind::SingularModel: return "SingularModel";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::UnobservedState: return "UnobservedState";
    case ErrorKind::DeadRow: return "DeadRow";
    case ErrorKind::IllConditionedPair: return "IllConditionedPair";
    case ErrorKind::SeparationFailure: return "SeparationFailure";
    case ErrorKind::NonRealSpectrum: return "NonRealSpectrum";
    case ErrorKind::InsufficientSignal: return "InsufficientSignal";
    case ErrorKind::QuartetConflict: return "QuartetConflict";
    case ErrorKind::Unreachable: return "Unreachable";
    case ErrorKind::MarginalDegenerate: return "MarginalDegenerate";
    case ErrorKind::IllConditionedFactor: return "IllConditionedFactor";
    case ErrorKind::CoverageFailure: return "CoverageFailure";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
  }
  return "UnknownError";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::TopologyMismatch:
    case ErrorKind::GenerationTimeout:
      return 2;
    case ErrorKind::ParseError:
    case ErrorKind::IoError:
      return 4;
    default:
      return 3;
  }
}

}  // namespace treespec

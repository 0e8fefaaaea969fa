#include "spa/error.hpp"

namespace spa {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::StepLimitExceeded: return "StepLimitExceeded";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::MissingCostate: return "MissingCostate";
    case ErrorCode::NonFiniteDerivative: return "NonFiniteDerivative";
    case ErrorCode::InvalidSwitchOrder: return "InvalidSwitchOrder";
    case ErrorCode::InfeasiblePolytope: return "InfeasiblePolytope";
    case ErrorCode::MaxItersExceeded: return "MaxItersExceeded";
    case ErrorCode::LineSearchFailure: return "LineSearchFailure";
    case ErrorCode::SecantDivergence: return "SecantDivergence";
    case ErrorCode::NoStructure: return "NoStructure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace spa

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace igroup {

/// Failure categories. The CLI maps each to an exit code: input and
/// configuration problems exit 1, numerical failures exit 2.
enum class ErrorKind {
  InvalidInput,
  InvalidBandwidth,
  Configuration,
  Schema,
  EmptyNeighborhood,
  SchemeMismatch,
  ObjectiveEvaluation,
  Regression,
  DegenerateGroup,
  InsufficientData,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::InvalidBandwidth: return "invalid_bandwidth";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::EmptyNeighborhood: return "empty_neighborhood";
    case ErrorKind::SchemeMismatch: return "scheme_mismatch";
    case ErrorKind::ObjectiveEvaluation: return "objective_evaluation";
    case ErrorKind::Regression: return "regression";
    case ErrorKind::DegenerateGroup: return "degenerate_group";
    case ErrorKind::InsufficientData: return "insufficient_data";
  }
  return "unknown";
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::InvalidBandwidth:
    case ErrorKind::Configuration:
    case ErrorKind::Schema:
      return 1;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace igroup

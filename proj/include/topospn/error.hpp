#pragma once

#include <stdexcept>
#include <string>

namespace topospn {

enum class ErrorCode {
  // network construction
  CycleDetected,
  DanglingChild,
  EmptyChildren,
  NegativeWeight,
  InvalidStructure,
  // inference
  ImpossibleEvidence,
  VariableObserved,
  NotASumNode,
  DimensionMismatch,
  // learning
  EmptyDataset,
  NonFiniteGradient,
  WouldOrphanRoot,
  // maps and grids
  InfeasibleConfig,
  ParseError,
  InvariantViolation,
  SameCategory,
  GridOverflow,
  MissingBackMapping,
  // templates
  UntrainedTemplate,
  ScopeGap,
  // generic
  InvalidArgument,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace topospn

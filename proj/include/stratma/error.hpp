#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stratma {

enum class ErrorCode {
  MalformedRow,
  MissingColumn,
  DuplicateId,
  NonNumericValue,
  InvalidArm,
  NonFiniteValue,
  ModeMismatch,
  CodedUnitMissingY,
  BudgetExceedsArm,
  BudgetTooSmall,
  AllocationInfeasible,
  AllZeroSD,
  InvalidArgument,
  UncodedUnit,
  EmptyArmSample,
  StratumDrawMismatch,
  StratumTooSmall,
  StratumTooSmallForVariance,
  AllValuesEqual,
  UnknownVariable,
  AllFiltered,
  InvalidR2,
  NonpositiveWeights,
  EnumerationTooLarge,
  InvalidConfig,
};

const char* to_string(ErrorCode code);

/// Data or contract violation raised by the library. Carries a machine-readable
/// code and, where relevant, the unit ids involved.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> ids = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        ids_(std::move(ids)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  ErrorCode code_;
  std::vector<std::string> ids_;
};

}  // namespace stratma

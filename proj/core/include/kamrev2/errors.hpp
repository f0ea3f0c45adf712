#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kamrev2 {

enum class ErrorKind {
  NotInvolutive,
  WrongSignature,
  DimensionMismatch,
  NotReversible,
  MultipleEigenvalues,
  SingularMatrix,
  ClassificationFailed,
  SubmersivityFailed,
  CutoffTooSmall,
  EmptyTarget,
  ZeroL,
  SamplerEmpty,
  SchemaError,
  OrderViolation,
  OmegaNotDiophantine,
  SingularM,
  SmallDivisorBreach,
  NonzeroMean,
  NewtonDiverged,
  GateExceeded,
  IntegratorFailure,
  ContractionFailed,
  InsufficientGrid,
  Degenerate,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class SmallDivisorError : public Error {
 public:
  SmallDivisorError(std::vector<int> mode, double divisor, double threshold);
  const std::vector<int>& mode() const noexcept { return mode_; }
  double divisor() const noexcept { return divisor_; }
  double threshold() const noexcept { return threshold_; }

 private:
  std::vector<int> mode_;
  double divisor_;
  double threshold_;
};

class NewtonDivergedError : public Error {
 public:
  NewtonDivergedError(const std::string& what, std::vector<double> history);
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace kamrev2

#include "kamrev2/errors.hpp"

#include <sstream>

namespace kamrev2 {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotInvolutive: return "NotInvolutive";
    case ErrorKind::WrongSignature: return "WrongSignature";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotReversible: return "NotReversible";
    case ErrorKind::MultipleEigenvalues: return "MultipleEigenvalues";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::ClassificationFailed: return "ClassificationFailed";
    case ErrorKind::SubmersivityFailed: return "SubmersivityFailed";
    case ErrorKind::CutoffTooSmall: return "CutoffTooSmall";
    case ErrorKind::EmptyTarget: return "EmptyTarget";
    case ErrorKind::ZeroL: return "ZeroL";
    case ErrorKind::SamplerEmpty: return "SamplerEmpty";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::OrderViolation: return "OrderViolation";
    case ErrorKind::OmegaNotDiophantine: return "OmegaNotDiophantine";
    case ErrorKind::SingularM: return "SingularM";
    case ErrorKind::SmallDivisorBreach: return "SmallDivisorBreach";
    case ErrorKind::NonzeroMean: return "NonzeroMean";
    case ErrorKind::NewtonDiverged: return "NewtonDiverged";
    case ErrorKind::GateExceeded: return "GateExceeded";
    case ErrorKind::IntegratorFailure: return "IntegratorFailure";
    case ErrorKind::ContractionFailed: return "ContractionFailed";
    case ErrorKind::InsufficientGrid: return "InsufficientGrid";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

namespace {
std::string breach_message(const std::vector<int>& mode, double divisor, double threshold) {
  std::ostringstream os;
  os << "mode k=(";
  for (std::size_t i = 0; i < mode.size(); ++i) os << (i ? "," : "") << mode[i];
  os << ") has |<freq,k>|=" << divisor << " below guard " << threshold;
  return os.str();
}
}  // namespace

SmallDivisorError::SmallDivisorError(std::vector<int> mode, double divisor, double threshold)
    : Error(ErrorKind::SmallDivisorBreach, breach_message(mode, divisor, threshold)),
      mode_(std::move(mode)),
      divisor_(divisor),
      threshold_(threshold) {}

NewtonDivergedError::NewtonDivergedError(const std::string& what, std::vector<double> history)
    : Error(ErrorKind::NewtonDiverged, what), history_(std::move(history)) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace kamrev2

#include "msmsens/error.hpp"

namespace msmsens {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::RaggedPanel: return "RaggedPanel";
    case ErrorKind::BadFoldCount: return "BadFoldCount";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::TooManyLevels: return "TooManyLevels";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::BadTau: return "BadTau";
    case ErrorKind::SingularMoment: return "SingularMoment";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::GridFailure: return "GridFailure";
    case ErrorKind::SubsampleTooSmall: return "SubsampleTooSmall";
    case ErrorKind::NegativeVariance: return "NegativeVariance";
    case ErrorKind::UnknownDgp: return "UnknownDgp";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::UsageError: return "UsageError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::MissingColumn:
    case ErrorKind::ParseError:
    case ErrorKind::EmptyFile:
    case ErrorKind::RaggedPanel:
      return ErrorCategory::Data;
    case ErrorKind::UsageError:
    case ErrorKind::ConfigError:
    case ErrorKind::UnknownDgp:
    case ErrorKind::BadFoldCount:
    case ErrorKind::BadTau:
    case ErrorKind::TooLarge:
      return ErrorCategory::Config;
    default:
      return ErrorCategory::Numerical;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

ParseError::ParseError(std::size_t row, std::size_t col, const std::string& detail)
    : Error(ErrorKind::ParseError,
            "row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + detail),
      row_(row),
      col_(col) {}

ConfigError::ConfigError(std::string pointer, const std::string& detail)
    : Error(ErrorKind::ConfigError, (pointer.empty() ? std::string("/") : pointer) + ": " + detail),
      pointer_(std::move(pointer)) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace msmsens

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msmsens {

enum class ErrorKind {
  // input data
  IoError,
  MissingColumn,
  ParseError,
  EmptyFile,
  RaggedPanel,
  BadFoldCount,
  // nuisance fitting
  SingularDesign,
  TooManyLevels,
  DegenerateVariance,
  BadTau,
  // estimation
  SingularMoment,
  NoConvergence,
  GridFailure,
  SubsampleTooSmall,
  NegativeVariance,
  // synthetic data and reference solvers
  UnknownDgp,
  TooLarge,
  // configuration and usage
  UsageError,
  ConfigError,
};

// Coarse grouping that the command line maps onto exit codes.
enum class ErrorCategory { Config, Data, Numerical };

std::string_view to_string(ErrorKind kind);
ErrorCategory category_of(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

// Thrown for malformed CSV cells; row and column are zero-based positions in
// the data rows (header excluded) and the header, respectively.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t col, const std::string& detail);
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

// Configuration problem located by a JSON pointer into the run config.
class ConfigError : public Error {
 public:
  ConfigError(std::string pointer, const std::string& detail);
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace msmsens

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aeronoise {

enum class ErrorKind {
  MalformedRow,
  RangeViolation,
  DuplicateKey,
  DanglingReference,
  EmptyInput,
  AmbiguousMapping,
  MissingPopulation,
  MissingWeather,
  TooFewRows,
  InvalidConfig,
  NonFiniteFeature,
  NonFiniteTarget,
  MissingFeature,
  UnknownFeature,
  TooManyFeatures,
  NegativeValue,
  GridMismatch,
  InsufficientData,
  UnmappedTract,
  LengthMismatch,
  ZeroVariance,
  NonPositiveValue,
  WrongLength,
  Io,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::DanglingReference: return "DanglingReference";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::AmbiguousMapping: return "AmbiguousMapping";
    case ErrorKind::MissingPopulation: return "MissingPopulation";
    case ErrorKind::MissingWeather: return "MissingWeather";
    case ErrorKind::TooFewRows: return "TooFewRows";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorKind::NonFiniteTarget: return "NonFiniteTarget";
    case ErrorKind::MissingFeature: return "MissingFeature";
    case ErrorKind::UnknownFeature: return "UnknownFeature";
    case ErrorKind::TooManyFeatures: return "TooManyFeatures";
    case ErrorKind::NegativeValue: return "NegativeValue";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::UnmappedTract: return "UnmappedTract";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::NonPositiveValue: return "NonPositiveValue";
    case ErrorKind::WrongLength: return "WrongLength";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for every module; `kind()` carries the error class,
/// `line()` the 1-based input line for parse errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(compose(kind, what, line)), kind_(kind), line_(line), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string compose(ErrorKind kind, const std::string& what,
                             std::optional<std::size_t> line) {
    std::string s(to_string(kind));
    if (line) s += " (line " + std::to_string(*line) + ")";
    s += ": ";
    s += what;
    return s;
  }

  ErrorKind kind_;
  std::optional<std::size_t> line_;
  std::string detail_;
};

}  // namespace aeronoise

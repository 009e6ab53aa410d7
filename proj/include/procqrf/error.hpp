#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace procqrf {

enum class ErrorCode {
  // ingestion
  MissingColumn,
  BadTimestamp,
  MalformedRow,
  EmptyLog,
  // datasets
  EmptyDataset,
  SchemaMismatch,
  TooFewCases,
  // models
  EmptyGrid,
  InvalidArgument,
  // metrics / profiles
  LengthMismatch,
  EmptyInput,
  AllExcluded,
  TooFewInstances,
  NonFiniteInput,
  // explanations
  DegenerateCoalition,
  SingularSystem,
  TooManyFeatures,
  UnknownFeature,
  // generator
  InvalidConfig,
  UnknownEvent,
  // persistence
  Io,
  FormatError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace procqrf

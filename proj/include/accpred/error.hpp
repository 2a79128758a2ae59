#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace accpred {

enum class ErrorCode {
  // archspace / shape
  EmptyArchitecture,
  SpatialCollapse,
  BadSkipSource,
  ShapeMismatch,
  ExhaustedRetries,
  IndexOutOfRange,
  InvalidConfig,
  // expdb
  UnknownDataset,
  InvalidRecord,
  // nn / predictor
  DimensionMismatch,
  StaleCache,
  ModelDimensionMismatch,
  InvalidArchitecture,
  // metrics / shared
  EmptyInput,
  LengthMismatch,
  DegenerateInput,
  // io
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace accpred

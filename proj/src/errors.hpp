#pragma once

#include <stdexcept>
#include <string>

namespace confbal {

enum class ErrorCode {
  InvalidArgument,
  ZeroVariance,
  ParseError,
  SchemaError,
  InvariantError,
  DegenerateSplit,
  EmptyChild,
  InvalidBandwidth,
  DegenerateData,
  SingularSystem,
  NotConverged,
  DegenerateWeights,
  ResampleDegenerate,
  ZeroPooledSd,
  DimensionTooSmall,
  IoError,
};

const char* error_code_name(ErrorCode code);

/// Library-wide exception type. Carries a machine-readable code so the C API
/// can map failures onto status values without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace confbal

#pragma once

#include <stdexcept>
#include <string>

namespace fde {

enum class ErrorCode {
  InvalidInput,
  DisconnectedNetwork,
  NonpositiveLength,
  DanglingEndpoint,
  NetworkMismatch,
  NonpositiveValue,
  EmptyObservations,
  PointOffNetwork,
  LambdaTooSmall,
  TooFewObservations,
  NotADensity,
  ParseError,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Thrown when the penalty does not strictly exceed the existence threshold.
class LambdaTooSmall : public Error {
 public:
  LambdaTooSmall(double lambda, double threshold);

  double lambda() const noexcept { return lambda_; }
  double threshold() const noexcept { return threshold_; }

 private:
  double lambda_;
  double threshold_;
};

}  // namespace fde

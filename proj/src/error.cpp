#include "fde/error.hpp"

#include <cstdio>

namespace fde {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DisconnectedNetwork: return "DisconnectedNetwork";
    case ErrorCode::NonpositiveLength: return "NonpositiveLength";
    case ErrorCode::DanglingEndpoint: return "DanglingEndpoint";
    case ErrorCode::NetworkMismatch: return "NetworkMismatch";
    case ErrorCode::NonpositiveValue: return "NonpositiveValue";
    case ErrorCode::EmptyObservations: return "EmptyObservations";
    case ErrorCode::PointOffNetwork: return "PointOffNetwork";
    case ErrorCode::LambdaTooSmall: return "LambdaTooSmall";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::NotADensity: return "NotADensity";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string lambda_message(double lambda, double threshold) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "lambda %.12g does not exceed the existence threshold %.12g",
                lambda, threshold);
  return buf;
}

}  // namespace

LambdaTooSmall::LambdaTooSmall(double lambda, double threshold)
    : Error(ErrorCode::LambdaTooSmall, lambda_message(lambda, threshold)),
      lambda_(lambda),
      threshold_(threshold) {}

}  // namespace fde

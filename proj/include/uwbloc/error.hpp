#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uwbloc {

enum class ErrorCode {
  InvalidArgument,
  ConfigError,
  IoError,
  // clock
  DegenerateInterval,
  NonPositiveInnovationCovariance,
  // twr
  DegenerateExchange,
  RankDeficient,
  // tdoa
  MissingSyncRx,
  InsufficientHistory,
  IncompleteEpoch,
  // solver
  CollinearAnchors,
  DegenerateGeometry,
  SingularPoint,
  DidNotConverge,
  AmbiguousSolution,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as this exception; the code identifies the
// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace uwbloc

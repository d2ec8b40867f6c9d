#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kubocone {

enum class ErrorCode {
  DegenerateBasis,
  NotHermitian,
  HermiticityConflict,
  AllBandsOnOneSide,
  EigenvalueOnContour,
  SingularResolvent,
  GapTooSmall,
  NoConvergence,
  BandCrossingRegion,
  NotConical,
  EpsilonTooLarge,
  TwoBandIsolationFailed,
  GridTooCoarse,
  DegeneratePoint,
  NotConverged,
  Gapless,
  ConfigParse,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code; the CLI maps codes to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kubocone

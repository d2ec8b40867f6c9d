#include "kubocone/error.hpp"

namespace kubocone {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateBasis: return "DegenerateBasis";
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::HermiticityConflict: return "HermiticityConflict";
    case ErrorCode::AllBandsOnOneSide: return "AllBandsOnOneSide";
    case ErrorCode::EigenvalueOnContour: return "EigenvalueOnContour";
    case ErrorCode::SingularResolvent: return "SingularResolvent";
    case ErrorCode::GapTooSmall: return "GapTooSmall";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::BandCrossingRegion: return "BandCrossingRegion";
    case ErrorCode::NotConical: return "NotConical";
    case ErrorCode::EpsilonTooLarge: return "EpsilonTooLarge";
    case ErrorCode::TwoBandIsolationFailed: return "TwoBandIsolationFailed";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::DegeneratePoint: return "DegeneratePoint";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::Gapless: return "Gapless";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace kubocone

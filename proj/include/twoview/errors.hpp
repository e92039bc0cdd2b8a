#pragma once

#include <stdexcept>
#include <string>

namespace twoview {

/// Failure categories raised across the library. Each maps to a CLI exit
/// code; see tools/twoview_main.cpp.
enum class Errc {
  NonPositiveFocal,
  DegenerateTranslation,
  FullRank,
  RankDeficient,
  NearZeroDivisor,
  ZeroMatrix,
  MixedNormalization,
  DependentColumns,
  InsufficientCorrespondences,
  DegenerateConfiguration,
  WrongSampleSize,
  NoConsensus,
  RankDeficientInit,
  DegeneratePoints,
  DegenerateLine,
  EmptySelection,
  BehindCamera,
  InfeasibleConfig,
  CoincidentCenters,
  RankDeficientCamera,
  AllStartsFailed,
  ParseError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::NonPositiveFocal: return "NonPositiveFocal";
    case Errc::DegenerateTranslation: return "DegenerateTranslation";
    case Errc::FullRank: return "FullRank";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NearZeroDivisor: return "NearZeroDivisor";
    case Errc::ZeroMatrix: return "ZeroMatrix";
    case Errc::MixedNormalization: return "MixedNormalization";
    case Errc::DependentColumns: return "DependentColumns";
    case Errc::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::WrongSampleSize: return "WrongSampleSize";
    case Errc::NoConsensus: return "NoConsensus";
    case Errc::RankDeficientInit: return "RankDeficientInit";
    case Errc::DegeneratePoints: return "DegeneratePoints";
    case Errc::DegenerateLine: return "DegenerateLine";
    case Errc::EmptySelection: return "EmptySelection";
    case Errc::BehindCamera: return "BehindCamera";
    case Errc::InfeasibleConfig: return "InfeasibleConfig";
    case Errc::CoincidentCenters: return "CoincidentCenters";
    case Errc::RankDeficientCamera: return "RankDeficientCamera";
    case Errc::AllStartsFailed: return "AllStartsFailed";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace twoview

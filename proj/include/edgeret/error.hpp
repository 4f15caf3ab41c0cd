#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgeret {

enum class Errc {
  ZeroVector,
  OddLength,
  InvalidK,
  BadSchedule,
  SupportTooWide,
  SymbolOverflow,
  TruncatedStream,
  ShapeMismatch,
  NoForwardCache,
  LabelOutOfRange,
  BadSpec,
  EmptyDataset,
  EmptyFamily,
  DimMismatch,
  ParseError,
  DimInconsistent,
  BadCheckpoint,
  BadConfig,
  Io,
};

std::string_view errc_name(Errc code) noexcept;

// All library failures are reported as Error; code() identifies the kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::OddLength: return "OddLength";
    case Errc::InvalidK: return "InvalidK";
    case Errc::BadSchedule: return "BadSchedule";
    case Errc::SupportTooWide: return "SupportTooWide";
    case Errc::SymbolOverflow: return "SymbolOverflow";
    case Errc::TruncatedStream: return "TruncatedStream";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NoForwardCache: return "NoForwardCache";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::BadSpec: return "BadSpec";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::EmptyFamily: return "EmptyFamily";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::ParseError: return "ParseError";
    case Errc::DimInconsistent: return "DimInconsistent";
    case Errc::BadCheckpoint: return "BadCheckpoint";
    case Errc::BadConfig: return "BadConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace edgeret

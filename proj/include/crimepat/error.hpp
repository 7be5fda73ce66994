#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crimepat {

enum class ErrorKind {
  NotFound,
  ZeroModeExcluded,
  HypothesisViolated,
  NoPositiveBifurcation,
  DegenerateProjection,
  ResonantK2,
  Precondition,
  NumericalBlowup,
  InsufficientData,
  Config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::ZeroModeExcluded: return "ZeroModeExcluded";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::NoPositiveBifurcation: return "NoPositiveBifurcation";
    case ErrorKind::DegenerateProjection: return "DegenerateProjection";
    case ErrorKind::ResonantK2: return "ResonantK2";
    case ErrorKind::Precondition: return "Precondition";
    case ErrorKind::NumericalBlowup: return "NumericalBlowup";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. The kind is the
/// stable, machine-checkable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
  [[nodiscard]] const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace crimepat

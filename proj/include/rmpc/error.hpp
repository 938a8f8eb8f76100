#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rmpc {

enum class ErrorKind {
  RankDeficient,
  IllConditioned,
  NoConvergence,
  NoTermination,
  Infeasible,
  Unbounded,
  EmptyResult,
  DimensionTooHigh,
  TooManyVertices,
  VertexLimit,
  EmptyTerminal,
  EmptyTightened,
  CycleDetected,
  SamplingStalled,
  ConstraintViolation,
  InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NoTermination: return "NoTermination";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::Unbounded: return "Unbounded";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::DimensionTooHigh: return "DimensionTooHigh";
    case ErrorKind::TooManyVertices: return "TooManyVertices";
    case ErrorKind::VertexLimit: return "VertexLimit";
    case ErrorKind::EmptyTerminal: return "EmptyTerminal";
    case ErrorKind::EmptyTightened: return "EmptyTightened";
    case ErrorKind::CycleDetected: return "CycleDetected";
    case ErrorKind::SamplingStalled: return "SamplingStalled";
    case ErrorKind::ConstraintViolation: return "ConstraintViolation";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable kind next to the message.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string & what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

}  // namespace rmpc

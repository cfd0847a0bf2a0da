#include "rangeslam/error.hpp"

namespace rangeslam {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DegenerateChannel: return "DegenerateChannel";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::SingleClassDataset: return "SingleClassDataset";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::NonPositiveDt: return "NonPositiveDt";
    case ErrorKind::Underdetermined: return "Underdetermined";
    case ErrorKind::NonPositiveDistance: return "NonPositiveDistance";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::GeometryMismatch: return "GeometryMismatch";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InputError: return "InputError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace rangeslam

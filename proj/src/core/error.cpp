#include "ecg/core/error.hpp"

#include <utility>

namespace ecg {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::FormatUnknown: return "FormatUnknown";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::DurationOutOfRange: return "DurationOutOfRange";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::FlatSignal: return "FlatSignal";
    case ErrorCode::ModelShapeError: return "ModelShapeError";
    case ErrorCode::NumericError: return "NumericError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::AlreadyExists: return "AlreadyExists";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string message, std::string subject)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code),
      message_(std::move(message)),
      subject_(std::move(subject)) {}

}  // namespace ecg

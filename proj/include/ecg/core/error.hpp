#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ecg {

enum class ErrorCode {
  DomainError,
  FormatUnknown,
  ParseError,
  RateMismatch,
  DurationOutOfRange,
  TooShort,
  BadWindow,
  FlatSignal,
  ModelShapeError,
  NumericError,
  NotFound,
  BadRequest,
  AlreadyExists,
  IoError,
};

// Stable identifier used on the wire (API error bodies, rejection records).
std::string_view error_code_name(ErrorCode code) noexcept;

// Every failure the platform reports carries a code plus an optional subject:
// the offending layer for ModelShapeError/NumericError, the recording id for
// preprocessing rejections.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string subject = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }
  // what() without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::string subject_;
};

}  // namespace ecg

#pragma once

#include <string>
#include <string_view>

namespace ecg {

// Logistic function. Saturated tails are clamped so the result always stays
// inside the open interval (0, 1). Throws Error(DomainError) on NaN/inf.
double sigmoid(double x);

// Lowercase hex SHA-256 of the input (64 characters).
std::string content_hash(std::string_view bytes);

// Lowercase hex HMAC-SHA256 keyed digest.
std::string keyed_digest(std::string_view key, std::string_view message);

}  // namespace ecg

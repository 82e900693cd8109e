#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace ecg {

// UTC instant with millisecond precision.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

// "2024-03-01T12:00:00.250Z"
std::string format_rfc3339(Timestamp t);

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]" followed by "Z" or "+HH:MM"/"-HH:MM".
// Fractions beyond milliseconds are truncated. Throws Error(ParseError).
Timestamp parse_rfc3339(std::string_view text);

// Seconds between two instants (b - a).
double seconds_between(Timestamp a, Timestamp b);

Timestamp add_seconds(Timestamp t, double seconds);

Timestamp from_unix_seconds(double seconds);
double to_unix_seconds(Timestamp t);

}  // namespace ecg

#pragma once

// Device payload adapters.
//
// Watch export (.ecg.xml):
//   <ecgExport rateHz="500" recordedAt="2024-03-01T12:00:00.000Z" lead="I">
//     <samples>12 -40 17 ...</samples>
//   </ecgExport>
//
// Kardia / Fitbit record (one JSON object, UTF-8):
//   {"device":"kardia","rate":100,"recordedAt":"...","samples_uV":[12,-40,...]}
//
// Samples arrive in microvolts and are stored in millivolts (value / 1000).

#include <string>
#include <string_view>
#include <vector>

#include "ecg/core/types.hpp"

namespace ecg::device {

struct AdapterConfig {
  double nominal_duration_s = 30.0;
  double duration_tolerance_s = 0.5;
  // Fitbit never publishes its ECG rate; 250 Hz is an assumed default.
  std::vector<int> fitbit_allowed_rates{250};
};

inline constexpr int kAppleWatchRateHz = 500;
inline constexpr int kKardiaRateHz = 100;

struct RawDeviceRecord {
  DeviceKind device = DeviceKind::Kardia;
  std::string bytes;
  std::string source_uri;
  Timestamp fetched_at{};
};

// Classifies a payload by its structural signature. Total over arbitrary
// bytes: returns the kind or throws Error(FormatUnknown).
DeviceKind detect_format(std::string_view bytes);

// Each parser sets recording_id = content_hash(bytes) and
// received_at = `received_at`; study_id is left empty for ingest to fill.
// Errors: ParseError, RateMismatch, DurationOutOfRange.
EcgRecording parse_apple_watch_export(std::string_view bytes,
                                      const AdapterConfig& config = {},
                                      Timestamp received_at = {});
EcgRecording parse_kardia_record(std::string_view bytes,
                                 const AdapterConfig& config = {},
                                 Timestamp received_at = {});
EcgRecording parse_fitbit_record(std::string_view bytes,
                                 const AdapterConfig& config = {},
                                 Timestamp received_at = {});

// detect_format followed by the matching parser.
EcgRecording parse_any(std::string_view bytes, const AdapterConfig& config = {},
                       Timestamp received_at = {});

}  // namespace ecg::device

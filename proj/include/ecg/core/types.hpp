#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecg/core/time.hpp"

namespace ecg {

enum class DeviceKind { AppleWatch, Kardia, Fitbit };

// Wire names: "apple_watch", "kardia", "fitbit".
std::string_view to_string(DeviceKind kind) noexcept;

// Strict inverse of to_string. Throws Error(BadRequest) for anything else.
DeviceKind parse_device_kind(std::string_view text);
std::optional<DeviceKind> try_parse_device_kind(std::string_view text) noexcept;

// SHA-256 of the raw source payload, lowercase hex.
class RecordingId {
 public:
  static constexpr std::size_t kLength = 64;

  RecordingId() = default;
  // Throws Error(BadRequest) unless `hex` is 64 lowercase hex digits.
  explicit RecordingId(std::string hex);
  static RecordingId of_bytes(std::string_view raw);

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }
  auto operator<=>(const RecordingId&) const = default;

 private:
  std::string value_;
};

// Opaque pseudonym standing in for an external patient identifier.
class StudyId {
 public:
  static constexpr std::size_t kLength = 32;

  StudyId() = default;
  // Throws Error(BadRequest) unless `hex` is 32 lowercase hex digits.
  explicit StudyId(std::string hex);

  const std::string& str() const noexcept { return value_; }
  auto operator<=>(const StudyId&) const = default;

 private:
  std::string value_;
};

bool is_lower_hex(std::string_view text, std::size_t length) noexcept;

// Canonical single-lead recording. Samples are millivolts.
class EcgRecording {
 public:
  struct Fields {
    RecordingId recording_id;
    DeviceKind device = DeviceKind::Kardia;
    StudyId study_id;
    int sample_rate_hz = 0;
    std::string lead = "I";
    std::vector<double> samples_mv;
    Timestamp recorded_at{};
    Timestamp received_at{};
  };

  // Throws Error(BadRequest) when samples are empty or the rate is not
  // positive.
  explicit EcgRecording(Fields fields);

  const RecordingId& recording_id() const noexcept { return f_.recording_id; }
  DeviceKind device() const noexcept { return f_.device; }
  const StudyId& study_id() const noexcept { return f_.study_id; }
  int sample_rate_hz() const noexcept { return f_.sample_rate_hz; }
  const std::string& lead() const noexcept { return f_.lead; }
  std::span<const double> samples() const noexcept { return f_.samples_mv; }
  Timestamp recorded_at() const noexcept { return f_.recorded_at; }
  Timestamp received_at() const noexcept { return f_.received_at; }
  double duration_seconds() const noexcept;

  // Copies with a pseudonym or ingest time attached; the recording is
  // otherwise immutable.
  EcgRecording with_study(StudyId study) const;
  EcgRecording with_received_at(Timestamp t) const;

 private:
  Fields f_;
};

// Model input: exactly 5000 z-scored samples (10 s at 500 Hz).
class NormalizedWindow {
 public:
  static constexpr std::size_t kLength = 5000;
  static constexpr int kRateHz = 500;

  // Throws Error(BadRequest) when values.size() != kLength.
  NormalizedWindow(std::vector<double> values, RecordingId source,
                   double window_start_s);

  std::span<const double> values() const noexcept { return values_; }
  const RecordingId& source_recording_id() const noexcept { return source_; }
  double window_start_s() const noexcept { return window_start_s_; }

 private:
  std::vector<double> values_;
  RecordingId source_;
  double window_start_s_ = 0.0;
};

// Five-stage latency decomposition of one recording's turnaround.
class StageTimings {
 public:
  StageTimings() = default;
  // Throws Error(BadRequest) when any stage is negative or non-finite.
  StageTimings(double acquisition_s, double upload_s, double pickup_s,
               double inference_s, double publish_s);

  // Rebuilds from a stored record and checks the redundant total to 1e-9.
  static StageTimings from_stored(double acquisition_s, double upload_s,
                                  double pickup_s, double inference_s,
                                  double publish_s, double stored_total_s);

  double acquisition_s() const noexcept { return acquisition_s_; }
  double upload_s() const noexcept { return upload_s_; }
  double pickup_s() const noexcept { return pickup_s_; }
  double inference_s() const noexcept { return inference_s_; }
  double publish_s() const noexcept { return publish_s_; }
  double total_s() const noexcept { return total_s_; }

  static constexpr double kTotalTolerance = 1e-9;

 private:
  double acquisition_s_ = 0.0;
  double upload_s_ = 0.0;
  double pickup_s_ = 0.0;
  double inference_s_ = 0.0;
  double publish_s_ = 0.0;
  double total_s_ = 0.0;
};

struct PredictionResult {
  RecordingId recording_id;
  std::string model_id;
  double probability = 0.0;
  bool label = false;
  double threshold = 0.5;
  StageTimings timings;
  Timestamp produced_at{};

  // Builds a result with label = probability >= threshold.
  static PredictionResult make(RecordingId recording_id, std::string model_id,
                               double probability, double threshold,
                               StageTimings timings, Timestamp produced_at);

  // Throws Error(BadRequest) if probability/threshold/label are inconsistent.
  void validate() const;
};

inline constexpr double kAcquisitionSeconds = 30.0;

}  // namespace ecg

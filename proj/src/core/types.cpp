#include "ecg/core/types.hpp"

#include <cmath>
#include <utility>

#include "ecg/core/error.hpp"
#include "ecg/core/math.hpp"

namespace ecg {

std::string_view to_string(DeviceKind kind) noexcept {
  switch (kind) {
    case DeviceKind::AppleWatch: return "apple_watch";
    case DeviceKind::Kardia: return "kardia";
    case DeviceKind::Fitbit: return "fitbit";
  }
  return "unknown";
}

std::optional<DeviceKind> try_parse_device_kind(std::string_view text) noexcept {
  if (text == "apple_watch") return DeviceKind::AppleWatch;
  if (text == "kardia") return DeviceKind::Kardia;
  if (text == "fitbit") return DeviceKind::Fitbit;
  return std::nullopt;
}

DeviceKind parse_device_kind(std::string_view text) {
  if (auto kind = try_parse_device_kind(text)) return *kind;
  throw Error(ErrorCode::BadRequest,
              "unknown device kind '" + std::string(text) + "'");
}

bool is_lower_hex(std::string_view text, std::size_t length) noexcept {
  if (text.size() != length) return false;
  for (char c : text) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

RecordingId::RecordingId(std::string hex) : value_(std::move(hex)) {
  if (!is_lower_hex(value_, kLength)) {
    throw Error(ErrorCode::BadRequest, "malformed recording id '" + value_ + "'");
  }
}

RecordingId RecordingId::of_bytes(std::string_view raw) {
  return RecordingId(content_hash(raw));
}

StudyId::StudyId(std::string hex) : value_(std::move(hex)) {
  if (!is_lower_hex(value_, kLength)) {
    throw Error(ErrorCode::BadRequest, "malformed study id '" + value_ + "'");
  }
}

EcgRecording::EcgRecording(Fields fields) : f_(std::move(fields)) {
  if (f_.samples_mv.empty()) {
    throw Error(ErrorCode::BadRequest, "recording has no samples");
  }
  if (f_.sample_rate_hz <= 0) {
    throw Error(ErrorCode::BadRequest, "sample rate must be positive");
  }
}

double EcgRecording::duration_seconds() const noexcept {
  return static_cast<double>(f_.samples_mv.size()) / f_.sample_rate_hz;
}

EcgRecording EcgRecording::with_study(StudyId study) const {
  Fields f = f_;
  f.study_id = std::move(study);
  return EcgRecording(std::move(f));
}

EcgRecording EcgRecording::with_received_at(Timestamp t) const {
  Fields f = f_;
  f.received_at = t;
  return EcgRecording(std::move(f));
}

NormalizedWindow::NormalizedWindow(std::vector<double> values, RecordingId source,
                                   double window_start_s)
    : values_(std::move(values)),
      source_(std::move(source)),
      window_start_s_(window_start_s) {
  if (values_.size() != kLength) {
    throw Error(ErrorCode::BadRequest,
                "normalized window must hold 5000 samples, got " +
                    std::to_string(values_.size()));
  }
}

namespace {

void check_stage(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw Error(ErrorCode::BadRequest,
                std::string("stage duration ") + name + " must be finite and >= 0");
  }
}

}  // namespace

StageTimings::StageTimings(double acquisition_s, double upload_s, double pickup_s,
                           double inference_s, double publish_s)
    : acquisition_s_(acquisition_s),
      upload_s_(upload_s),
      pickup_s_(pickup_s),
      inference_s_(inference_s),
      publish_s_(publish_s) {
  check_stage(acquisition_s, "acquisition_s");
  check_stage(upload_s, "upload_s");
  check_stage(pickup_s, "pickup_s");
  check_stage(inference_s, "inference_s");
  check_stage(publish_s, "publish_s");
  total_s_ = acquisition_s_ + upload_s_ + pickup_s_ + inference_s_ + publish_s_;
}

StageTimings StageTimings::from_stored(double acquisition_s, double upload_s,
                                       double pickup_s, double inference_s,
                                       double publish_s, double stored_total_s) {
  StageTimings t(acquisition_s, upload_s, pickup_s, inference_s, publish_s);
  if (!(std::fabs(t.total_s_ - stored_total_s) <= kTotalTolerance)) {
    throw Error(ErrorCode::ParseError,
                "stored total_s does not equal the sum of its stages");
  }
  return t;
}

PredictionResult PredictionResult::make(RecordingId recording_id,
                                        std::string model_id, double probability,
                                        double threshold, StageTimings timings,
                                        Timestamp produced_at) {
  PredictionResult r;
  r.recording_id = std::move(recording_id);
  r.model_id = std::move(model_id);
  r.probability = probability;
  r.threshold = threshold;
  r.label = probability >= threshold;
  r.timings = timings;
  r.produced_at = produced_at;
  r.validate();
  return r;
}

void PredictionResult::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw Error(ErrorCode::BadRequest, "probability outside [0, 1]");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::BadRequest, "threshold outside (0, 1)");
  }
  if (label != (probability >= threshold)) {
    throw Error(ErrorCode::BadRequest, "label disagrees with probability/threshold");
  }
}

}  // namespace ecg

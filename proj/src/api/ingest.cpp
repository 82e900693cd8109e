#include "ecg/api/ingest.hpp"

#include <chrono>

#include "ecg/core/error.hpp"

namespace ecg::api {

Ingestor::Ingestor(lake::Lake& lake, pipeline::Clock& clock, device::AdapterConfig adapters)
    : lake_(lake), clock_(clock), adapters_(std::move(adapters)) {}

IngestOutcome Ingestor::ingest(const IngestRequest& request) {
  const auto started = std::chrono::steady_clock::now();
  if (request.bytes.empty()) throw Error(ErrorCode::BadRequest, "empty payload");
  if (request.external_id.empty()) throw Error(ErrorCode::BadRequest, "missing external id");

  const auto id = RecordingId::of_bytes(request.bytes);
  if (auto existing = lake_.find_entry(id)) return {*existing, true};

  DeviceKind kind;
  try {
    kind = device::detect_format(request.bytes);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatUnknown) lake_.quarantine(request.bytes);
    throw;
  }
  if (request.declared_device && *request.declared_device != kind) {
    throw Error(ErrorCode::BadRequest, "declared device " +
                                           std::string(to_string(*request.declared_device)) +
                                           " does not match payload (" +
                                           std::string(to_string(kind)) + ")");
  }

  const auto received_at = clock_.now();
  auto parsed = device::parse_any(request.bytes, adapters_, received_at);
  const auto study = lake_.register_study(request.external_id);
  parsed = parsed.with_study(study);

  device::RawDeviceRecord raw{kind, request.bytes, request.source_uri, received_at};
  try {
    // Measured up to the point the raw payload is durable in the lake.
    auto upload_s = [&] {
      if (fixed_upload_s_) return *fixed_upload_s_;
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };
    return {lake_.put_recording(raw, parsed, upload_s), false};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AlreadyExists) throw;
    if (auto existing = lake_.find_entry(id)) return {*existing, true};
    throw;
  }
}

}  // namespace ecg::api

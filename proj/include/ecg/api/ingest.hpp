#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "ecg/core/error.hpp"
#include "ecg/device/adapters.hpp"
#include "ecg/lake/lake.hpp"
#include "ecg/pipeline/clock.hpp"

namespace ecg::api {

struct IngestRequest {
  std::string bytes;
  std::string external_id;
  std::optional<DeviceKind> declared_device;  // X-Device-Kind, when sent
  std::string source_uri;
};

struct IngestOutcome {
  lake::LakeEntry entry;
  bool duplicate = false;
};

// detect -> parse -> register_study -> put_recording. upload_s is the wall
// time from receipt until the raw payload is durable in the lake.
//
// Errors: FormatUnknown (payload quarantined), ParseError, RateMismatch,
// DurationOutOfRange, BadRequest (empty body or external id, or a declared
// device that disagrees with the payload), IoError.
class Ingestor {
 public:
  Ingestor(lake::Lake& lake, pipeline::Clock& clock, device::AdapterConfig adapters = {});

  IngestOutcome ingest(const IngestRequest& request);

  // Overrides the measured upload time (bench mode).
  void set_fixed_upload_s(std::optional<double> upload_s) { fixed_upload_s_ = upload_s; }

  lake::Lake& lake() noexcept { return lake_; }

 private:
  lake::Lake& lake_;
  pipeline::Clock& clock_;
  device::AdapterConfig adapters_;
  std::optional<double> fixed_upload_s_;
};

}  // namespace ecg::api

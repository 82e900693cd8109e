#pragma once

// JSON encodings shared by the lake's on-disk records and the HTTP API.
// Timestamps are RFC 3339 UTC with milliseconds.

#include "json.hpp"

#include "ecg/core/types.hpp"
#include "ecg/lake/records.hpp"

namespace ecg::lake {

using nlohmann::json;

json to_json(const StageTimings& t);
StageTimings timings_from_json(const json& j);

json to_json(const PredictionResult& r);
PredictionResult prediction_from_json(const json& j);

json to_json(const ProcessingNote& n);
ProcessingNote note_from_json(const json& j);

json to_json(const LakeEntry& e);
LakeEntry entry_from_json(const json& j);

// Canonical recording document, samples in millivolts.
json to_json(const StoredRecording& r);
StoredRecording recording_from_json(const json& j);

}  // namespace ecg::lake

#include "ecg/lake/codec.hpp"

#include "ecg/core/error.hpp"

namespace ecg::lake {

std::string blob_path_for(const RecordingId& id) {
  return "blobs/" + id.str().substr(0, 2) + "/" + id.str();
}

std::string_view to_string(NoteKind kind) noexcept {
  switch (kind) {
    case NoteKind::Rejected: return "rejected";
    case NoteKind::ModelError: return "model_error";
    case NoteKind::Failed: return "failed";
  }
  return "unknown";
}

NoteKind parse_note_kind(std::string_view text) {
  if (text == "rejected") return NoteKind::Rejected;
  if (text == "model_error") return NoteKind::ModelError;
  if (text == "failed") return NoteKind::Failed;
  throw Error(ErrorCode::ParseError, "unknown note kind '" + std::string(text) + "'");
}

namespace {

template <typename F>
auto decoding(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed ") + what + ": " + e.what());
  }
}

Timestamp ts(const json& j, const char* key) {
  return parse_rfc3339(j.at(key).get_ref<const std::string&>());
}

}  // namespace

json to_json(const StageTimings& t) {
  return {{"acquisition_s", t.acquisition_s()}, {"upload_s", t.upload_s()},
          {"pickup_s", t.pickup_s()},           {"inference_s", t.inference_s()},
          {"publish_s", t.publish_s()},         {"total_s", t.total_s()}};
}

StageTimings timings_from_json(const json& j) {
  return decoding("stage timings", [&] {
    return StageTimings::from_stored(
        j.at("acquisition_s").get<double>(), j.at("upload_s").get<double>(),
        j.at("pickup_s").get<double>(), j.at("inference_s").get<double>(),
        j.at("publish_s").get<double>(), j.at("total_s").get<double>());
  });
}

json to_json(const PredictionResult& r) {
  return {{"recording_id", r.recording_id.str()},
          {"model_id", r.model_id},
          {"probability", r.probability},
          {"label", r.label},
          {"threshold", r.threshold},
          {"timings", to_json(r.timings)},
          {"produced_at", format_rfc3339(r.produced_at)}};
}

PredictionResult prediction_from_json(const json& j) {
  return decoding("prediction result", [&] {
    PredictionResult r;
    r.recording_id = RecordingId(j.at("recording_id").get<std::string>());
    r.model_id = j.at("model_id").get<std::string>();
    r.probability = j.at("probability").get<double>();
    r.label = j.at("label").get<bool>();
    r.threshold = j.at("threshold").get<double>();
    r.timings = timings_from_json(j.at("timings"));
    r.produced_at = ts(j, "produced_at");
    r.validate();
    return r;
  });
}

json to_json(const ProcessingNote& n) {
  json j = {{"recording_id", n.recording_id.str()},
            {"status", std::string(to_string(n.kind))},
            {"code", n.code},
            {"reason", n.reason},
            {"produced_at", format_rfc3339(n.produced_at)}};
  if (!n.model_id.empty()) j["model_id"] = n.model_id;
  return j;
}

ProcessingNote note_from_json(const json& j) {
  return decoding("processing note", [&] {
    ProcessingNote n;
    n.recording_id = RecordingId(j.at("recording_id").get<std::string>());
    n.kind = parse_note_kind(j.at("status").get<std::string>());
    n.model_id = j.value("model_id", std::string{});
    n.code = j.at("code").get<std::string>();
    n.reason = j.at("reason").get<std::string>();
    n.produced_at = ts(j, "produced_at");
    return n;
  });
}

json to_json(const LakeEntry& e) {
  return {{"index_seq", e.index_seq},
          {"recording_id", e.recording_id.str()},
          {"device", std::string(to_string(e.device))},
          {"study_id", e.study_id.str()},
          {"received_at", format_rfc3339(e.received_at)},
          {"blob_path", e.blob_path}};
}

LakeEntry entry_from_json(const json& j) {
  return decoding("index record", [&] {
    LakeEntry e;
    e.index_seq = j.at("index_seq").get<IndexSeq>();
    e.recording_id = RecordingId(j.at("recording_id").get<std::string>());
    e.device = parse_device_kind(j.at("device").get<std::string>());
    e.study_id = StudyId(j.at("study_id").get<std::string>());
    e.received_at = ts(j, "received_at");
    e.blob_path = j.at("blob_path").get<std::string>();
    if (e.blob_path != blob_path_for(e.recording_id)) {
      throw Error(ErrorCode::ParseError, "blob_path does not match recording_id");
    }
    return e;
  });
}

json to_json(const StoredRecording& s) {
  const auto& r = s.recording;
  return {{"recording_id", r.recording_id().str()},
          {"device", std::string(to_string(r.device()))},
          {"study_id", r.study_id().str()},
          {"sample_rate_hz", r.sample_rate_hz()},
          {"lead", r.lead()},
          {"recorded_at", format_rfc3339(r.recorded_at())},
          {"received_at", format_rfc3339(r.received_at())},
          {"upload_s", s.upload_s},
          {"unit", "mV"},
          {"samples", std::vector<double>(r.samples().begin(), r.samples().end())}};
}

StoredRecording recording_from_json(const json& j) {
  return decoding("canonical recording", [&] {
    EcgRecording::Fields f;
    f.recording_id = RecordingId(j.at("recording_id").get<std::string>());
    f.device = parse_device_kind(j.at("device").get<std::string>());
    f.study_id = StudyId(j.at("study_id").get<std::string>());
    f.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    f.lead = j.at("lead").get<std::string>();
    f.recorded_at = ts(j, "recorded_at");
    f.received_at = ts(j, "received_at");
    f.samples_mv = j.at("samples").get<std::vector<double>>();
    return StoredRecording{EcgRecording(std::move(f)), j.at("upload_s").get<double>()};
  });
}

}  // namespace ecg::lake

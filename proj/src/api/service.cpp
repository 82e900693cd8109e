#include "ecg/api/service.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <charconv>

#include "httplib.h"

#include "ecg/lake/codec.hpp"

namespace ecg::api {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Reply not_found(const std::string& what, const std::string& id) {
  return error_reply(Error(ErrorCode::NotFound, what + " not found", id));
}

std::optional<std::string> query_param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

void send(httplib::Response& res, const Reply& reply) {
  res.status = reply.status;
  res.set_content(reply.body.dump(), "application/json");
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::AlreadyExists:
      return 409;
    case ErrorCode::FormatUnknown:
    case ErrorCode::ParseError:
    case ErrorCode::RateMismatch:
    case ErrorCode::DurationOutOfRange:
      return 422;
    case ErrorCode::IoError:
      return 503;
    default:
      return 500;
  }
}

Reply error_reply(const Error& e) {
  return {http_status(e.code()),
          {{"error",
            {{"code", std::string(error_code_name(e.code()))}, {"message", e.message()}}}}};
}

ApiService::ApiService(lake::Lake& lake, Ingestor& ingestor, pipeline::Clock& clock,
                       TickSource last_tick)
    : lake_(lake), ingestor_(ingestor), clock_(clock), last_tick_(std::move(last_tick)) {}

std::optional<lake::LakeEntry> ApiService::lookup(const std::string& id) const {
  if (!is_lower_hex(id, RecordingId::kLength)) return std::nullopt;
  return lake_.find_entry(RecordingId(id));
}

Reply ApiService::post_recording(const std::string& body,
                                 const std::map<std::string, std::string>& headers) {
  IngestRequest req;
  req.bytes = body;
  req.source_uri = "api:/v1/recordings";
  for (const auto& [k, v] : headers) {
    const auto key = lower(k);
    if (key == "x-external-id") req.external_id = v;
    if (key == "x-device-kind" && !v.empty()) {
      const auto kind = try_parse_device_kind(v);
      if (!kind) {
        return error_reply(Error(ErrorCode::BadRequest, "unknown X-Device-Kind '" + v + "'"));
      }
      req.declared_device = *kind;
    }
  }
  if (body.size() > kMaxPayloadBytes) {
    return {413, {{"error", {{"code", "PayloadTooLarge"}, {"message", "body exceeds 8 MiB"}}}}};
  }
  try {
    const auto out = ingestor_.ingest(req);
    return {out.duplicate ? 200 : 201,
            {{"recording_id", out.entry.recording_id.str()},
             {"study_id", out.entry.study_id.str()},
             {"index_seq", out.entry.index_seq},
             {"duplicate", out.duplicate}}};
  } catch (const Error& e) {
    return error_reply(e);
  }
}

Reply ApiService::list_recordings(const std::optional<std::string>& since,
                                  const std::optional<std::string>& device) const {
  lake::IndexSeq cursor = 0;
  if (since) {
    const auto* first = since->data();
    const auto* last = first + since->size();
    const auto [ptr, ec] = std::from_chars(first, last, cursor);
    if (since->empty() || ec != std::errc() || ptr != last) {
      return error_reply(Error(ErrorCode::BadRequest, "since must be a non-negative integer"));
    }
  }
  std::optional<DeviceKind> filter;
  if (device) {
    filter = try_parse_device_kind(*device);
    if (!filter) return error_reply(Error(ErrorCode::BadRequest, "unknown device '" + *device + "'"));
  }
  json items = json::array();
  lake::IndexSeq max_seen = cursor;
  for (const auto& e : lake_.list_since(cursor)) {
    max_seen = std::max(max_seen, e.index_seq);
    if (filter && e.device != *filter) continue;
    items.push_back(lake::to_json(e));
  }
  return {200, {{"recordings", std::move(items)}, {"cursor", max_seen}}};
}

json ApiService::recording_summary(const lake::LakeEntry& e) const {
  const auto stored = lake_.get_recording(e.recording_id);
  const auto& r = stored.recording;
  json j = lake::to_json(e);
  j["sample_rate_hz"] = r.sample_rate_hz();
  j["lead"] = r.lead();
  j["recorded_at"] = format_rfc3339(r.recorded_at());
  j["sample_count"] = r.samples().size();
  j["duration_s"] = r.duration_seconds();
  j["upload_s"] = stored.upload_s;
  return j;
}

Reply ApiService::get_recording(const std::string& id) const {
  const auto e = lookup(id);
  if (!e) return not_found("recording", id);
  try {
    auto j = recording_summary(*e);
    j["status"] = results_body(*e).at("status");
    return {200, std::move(j)};
  } catch (const Error& err) {
    return error_reply(err);
  }
}

Reply ApiService::get_waveform(const std::string& id) const {
  const auto e = lookup(id);
  if (!e) return not_found("recording", id);
  try {
    const auto stored = lake_.get_recording(e->recording_id);
    const auto& r = stored.recording;
    return {200,
            {{"recording_id", id},
             {"sample_rate_hz", r.sample_rate_hz()},
             {"unit", "mV"},
             {"lead", r.lead()},
             {"recorded_at", format_rfc3339(r.recorded_at())},
             {"samples", std::vector<double>(r.samples().begin(), r.samples().end())}}};
  } catch (const Error& err) {
    return error_reply(err);
  }
}

// done: at least one model result. rejected/failed: terminal note without
// results. pending: nothing yet.
json ApiService::results_body(const lake::LakeEntry& e) const {
  const auto results = lake_.get_results(e.recording_id);
  const auto notes = lake_.get_notes(e.recording_id);
  json j = {{"recording_id", e.recording_id.str()}};
  json items = json::array();
  for (const auto& r : results) {
    auto item = lake::to_json(r);
    item.erase("recording_id");
    items.push_back(std::move(item));
  }
  json errors = json::array();
  std::optional<lake::ProcessingNote> terminal;
  for (const auto& n : notes) {
    if (n.kind == lake::NoteKind::ModelError) {
      errors.push_back({{"model_id", n.model_id}, {"code", n.code}, {"reason", n.reason}});
    } else if (!terminal) {
      terminal = n;
    }
  }
  std::string status = "pending";
  if (!results.empty()) {
    status = "done";
  } else if (terminal) {
    status = std::string(lake::to_string(terminal->kind));
    j["code"] = terminal->code;
    j["reason"] = terminal->reason;
  } else if (!errors.empty()) {
    status = "failed";
    j["code"] = "ModelError";
    j["reason"] = "every model failed";
  }
  j["status"] = status;
  j["results"] = std::move(items);
  j["model_errors"] = std::move(errors);
  return j;
}

Reply ApiService::get_results(const std::string& id) const {
  const auto e = lookup(id);
  if (!e) return not_found("recording", id);
  try {
    return {200, results_body(*e)};
  } catch (const Error& err) {
    return error_reply(err);
  }
}

Reply ApiService::get_timeline(const std::string& study_id) const {
  if (!is_lower_hex(study_id, StudyId::kLength)) return not_found("study", study_id);
  const auto entries = lake_.entries_for_study(StudyId(study_id));
  if (entries.empty()) return not_found("study", study_id);
  try {
    std::vector<std::pair<std::string, json>> rows;
    for (const auto& e : entries) {
      auto rec = recording_summary(e);
      auto res = results_body(e);
      json item = {{"recording", rec},
                   {"status", res.at("status")},
                   {"results", res.at("results")}};
      rows.emplace_back(rec.at("recorded_at").get<std::string>(), std::move(item));
    }
    // RFC 3339 UTC with fixed millisecond width sorts lexicographically.
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    json items = json::array();
    for (auto& [_, item] : rows) items.push_back(std::move(item));
    return {200, {{"study_id", study_id}, {"items", std::move(items)}}};
  } catch (const Error& err) {
    return error_reply(err);
  }
}

Reply ApiService::health() const {
  std::error_code ec;
  const bool reachable = std::filesystem::is_directory(lake_.root(), ec) &&
                         std::filesystem::exists(lake_.root() / "index.jsonl", ec);
  json j = {{"lake_reachable", reachable}, {"index_size", lake_.index_size()}};
  const auto tick = last_tick_ ? last_tick_() : std::nullopt;
  if (tick) {
    j["last_tick_at"] = format_rfc3339(*tick);
    j["last_tick_age_s"] = std::max(0.0, seconds_between(*tick, clock_.now()));
  } else {
    j["last_tick_at"] = nullptr;
    j["last_tick_age_s"] = nullptr;
  }
  j["status"] = reachable && tick ? "ok" : "degraded";
  return {200, std::move(j)};
}

void ApiService::install(httplib::Server& server) {
  server.set_payload_max_length(kMaxPayloadBytes);
  server.Post("/v1/recordings", [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);
    send(res, post_recording(req.body, headers));
  });
  server.Get("/v1/recordings", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, list_recordings(query_param(req, "since"), query_param(req, "device")));
  });
  server.Get(R"(/v1/recordings/([^/]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               send(res, get_recording(req.matches[1]));
             });
  server.Get(R"(/v1/recordings/([^/]+)/waveform)",
             [this](const httplib::Request& req, httplib::Response& res) {
               send(res, get_waveform(req.matches[1]));
             });
  server.Get(R"(/v1/results/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, get_results(req.matches[1]));
  });
  server.Get(R"(/v1/studies/([^/]+)/timeline)",
             [this](const httplib::Request& req, httplib::Response& res) {
               send(res, get_timeline(req.matches[1]));
             });
  server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    send(res, health());
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* code = res.status == 413 ? "PayloadTooLarge"
                       : res.status == 404 ? "NotFound"
                                           : "HttpError";
    res.set_content(json{{"error", {{"code", code}, {"message", httplib::status_message(res.status)}}}}
                        .dump(),
                    "application/json");
  });
  server.set_exception_handler(
      [](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        } catch (...) {
        }
        spdlog::error("{} {}: {}", req.method, req.path, what);
        res.status = 500;
        res.set_content(json{{"error", {{"code", "Internal"}, {"message", what}}}}.dump(),
                        "application/json");
      });
}

}  // namespace ecg::api

#pragma once

// HTTP front door.
//
//   POST /v1/recordings                    ingest (headers X-Device-Kind, X-External-Id)
//   GET  /v1/recordings?since=&device=     index listing
//   GET  /v1/recordings/{id}               recording metadata
//   GET  /v1/recordings/{id}/waveform      samples for plotting
//   GET  /v1/results/{id}                  processing status + per-model results
//   GET  /v1/studies/{id}/timeline         a study's recordings by recorded_at
//   GET  /v1/health                        poller liveness + lake reachability
//
// Every body is JSON; failures are {"error": {"code": ..., "message": ...}}.
// Response schemas live in schemas/.

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "ecg/api/ingest.hpp"
#include "ecg/lake/lake.hpp"
#include "ecg/pipeline/clock.hpp"

namespace httplib {
class Server;
}

namespace ecg::api {

using nlohmann::json;

inline constexpr std::size_t kMaxPayloadBytes = 8 * 1024 * 1024;

struct Reply {
  int status = 200;
  json body;
};

// Maps an error code to its HTTP status.
int http_status(ErrorCode code) noexcept;
Reply error_reply(const Error& e);

class ApiService {
 public:
  using TickSource = std::function<std::optional<Timestamp>()>;

  ApiService(lake::Lake& lake, Ingestor& ingestor, pipeline::Clock& clock,
             TickSource last_tick = {});

  Reply post_recording(const std::string& body, const std::map<std::string, std::string>& headers);
  Reply list_recordings(const std::optional<std::string>& since,
                        const std::optional<std::string>& device) const;
  Reply get_recording(const std::string& id) const;
  Reply get_waveform(const std::string& id) const;
  Reply get_results(const std::string& id) const;
  Reply get_timeline(const std::string& study_id) const;
  Reply health() const;

  // Registers the routes above, the payload limit and JSON error handlers.
  void install(httplib::Server& server);

 private:
  std::optional<lake::LakeEntry> lookup(const std::string& id) const;
  json recording_summary(const lake::LakeEntry& e) const;
  json results_body(const lake::LakeEntry& e) const;

  lake::Lake& lake_;
  Ingestor& ingestor_;
  pipeline::Clock& clock_;
  TickSource last_tick_;
};

}  // namespace ecg::api

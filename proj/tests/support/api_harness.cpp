#include "api_harness.hpp"

#include <cmath>

namespace ecg::testing {

namespace {

lake::LakeOptions no_sync() {
  lake::LakeOptions o;
  o.sync = false;
  return o;
}

pipeline::PipelineConfig harness_config() {
  pipeline::PipelineConfig c;
  c.poll_interval_s = 30.0;
  c.worker_count = 2;
  c.clock = pipeline::ClockMode::Simulated;
  return c;
}

}  // namespace

ApiHarness::ApiHarness()
    : lake_(dir_.path() / "lake", no_sync()),
      clock_(parse_rfc3339("2024-03-01T12:00:00.000Z")),
      ingestor_(lake_, clock_),
      models_(infer::ModelRegistry::from_file(data_dir() / "models" / "registry.json")),
      schemas_(schema_dir()) {
  pipeline_ = std::make_unique<pipeline::Pipeline>(lake_, models_, harness_config(), clock_);
  service_ = std::make_unique<api::ApiService>(lake_, ingestor_, clock_,
                                               [this] { return pipeline_->last_tick(); });
  service_->install(server_);
  port_ = server_.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
  client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
}

ApiHarness::~ApiHarness() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

namespace {

ApiHarness::Response convert(const httplib::Result& res) {
  ApiHarness::Response r;
  if (!res) return r;
  r.status = res->status;
  r.raw = res->body;
  r.body = nlohmann::json::parse(res->body, nullptr, false);
  return r;
}

}  // namespace

ApiHarness::Response ApiHarness::get(const std::string& path) {
  return convert(client_->Get(path));
}

ApiHarness::Response ApiHarness::post(const std::string& body, const std::string& external_id,
                                      const std::string& device_kind) {
  httplib::Headers headers;
  if (!external_id.empty()) headers.emplace("X-External-Id", external_id);
  if (!device_kind.empty()) headers.emplace("X-Device-Kind", device_kind);
  return convert(client_->Post("/v1/recordings", headers, body, "application/octet-stream"));
}

std::vector<std::string> ApiHarness::violations(const Response& r,
                                                const std::string& schema) const {
  if (r.status == 0) return {"no response"};
  if (r.body.is_discarded()) return {"body is not JSON"};
  return schemas_.validate(r.status >= 400 ? "error" : schema, r.body);
}

pipeline::TickReport ApiHarness::tick() {
  const auto interval_ms = static_cast<long long>(
      std::llround(pipeline_->config().poll_interval_s * 1000.0));
  const auto now_ms = clock_.now().time_since_epoch().count();
  clock_.set(Timestamp{std::chrono::milliseconds{(now_ms / interval_ms + 1) * interval_ms}});
  return pipeline_->tick();
}

}  // namespace ecg::testing

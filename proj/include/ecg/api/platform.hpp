#pragma once

// Wires lake, models, pipeline, feed connectors and the HTTP API into one
// process.
//
// Config file (JSON):
//   {"lake":     {"root": "lake", "sync": true},
//    "api":      {"listen": "127.0.0.1:8080"},
//    "devices":  {"fitbit_allowed_rates": [250], "duration_tolerance_s": 0.5},
//    "dsp":      {"baseline_window_s": 0.6, "window_policy": "central"},
//    "pipeline": {"poll_interval_s": 30, "workers": 2, "clock": "real",
//                 "models": [{"model_id": "lvsd", "kind": "cnn",
//                             "weight_file": "models/lvsd.ecgw", "threshold": 0.5}],
//                 "injected_delays": {"pickup_s": 19.17, "inference_s": 11.49,
//                                     "publish_s": 2.35}},
//    "feeds":    [{"name": "kardia", "url": "http://127.0.0.1:8081",
//                  "poll_interval_s": 10}]}
// "pipeline.models" may also be the path of a registry file. Relative paths
// resolve against the config file's directory.

#include <filesystem>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "ecg/api/feed.hpp"
#include "ecg/api/ingest.hpp"
#include "ecg/api/service.hpp"
#include "ecg/infer/registry.hpp"
#include "ecg/pipeline/pipeline.hpp"

namespace httplib {
class Server;
}

namespace ecg::api {

struct FeedSource {
  std::string name;
  std::string url;
  double poll_interval_s = 10.0;
};

struct PlatformConfig {
  std::filesystem::path lake_root = "lake";
  bool lake_sync = true;
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;  // 0 picks a free port
  device::AdapterConfig devices;
  pipeline::PipelineConfig pipeline;
  std::vector<infer::ModelDescriptor> models;
  std::vector<FeedSource> feeds;
};

// "host:port". Throws BadRequest.
std::pair<std::string, int> parse_listen(std::string_view text);

// Throws ParseError/BadRequest on malformed or out-of-range values.
PlatformConfig parse_platform_config(const nlohmann::json& doc,
                                     const std::filesystem::path& base_dir);
PlatformConfig load_platform_config(const std::filesystem::path& path);

class Platform {
 public:
  Platform(PlatformConfig config, pipeline::Clock& clock);
  ~Platform();

  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  // Binds the listener and starts the poll loop, feed loops and HTTP thread.
  void start();
  // Stops accepting requests, lets in-flight pipeline work finish, joins.
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

  int port() const noexcept { return bound_port_; }
  std::string base_url() const;

  lake::Lake& lake() noexcept { return *lake_; }
  pipeline::Pipeline& pipeline() noexcept { return *pipeline_; }
  const infer::ModelRegistry& models() const noexcept { return models_; }
  Ingestor& ingestor() noexcept { return *ingestor_; }

 private:
  struct FeedLoop;

  PlatformConfig config_;
  pipeline::Clock& clock_;
  std::unique_ptr<lake::Lake> lake_;
  infer::ModelRegistry models_;
  std::unique_ptr<Ingestor> ingestor_;
  std::unique_ptr<pipeline::Pipeline> pipeline_;
  std::unique_ptr<ApiService> service_;
  std::unique_ptr<httplib::Server> server_;
  std::vector<std::unique_ptr<FeedLoop>> feeds_;
  std::vector<std::jthread> threads_;
  int bound_port_ = 0;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopped_ = false;
};

}  // namespace ecg::api

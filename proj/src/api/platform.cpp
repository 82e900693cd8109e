#include "ecg/api/platform.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <fstream>

#include "httplib.h"

namespace ecg::api {

namespace fs = std::filesystem;
using nlohmann::json;

std::pair<std::string, int> parse_listen(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::BadRequest, "listen address must be host:port");
  }
  int port = -1;
  const auto digits = text.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || port < 0 ||
      port > 65535) {
    throw Error(ErrorCode::BadRequest, "bad port in listen address");
  }
  return {std::string(text.substr(0, colon)), port};
}

PlatformConfig parse_platform_config(const json& doc, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  PlatformConfig c;
  try {
    if (doc.contains("lake")) {
      const auto& l = doc.at("lake");
      c.lake_root = resolve(l.value("root", std::string("lake")));
      c.lake_sync = l.value("sync", true);
    } else {
      c.lake_root = resolve("lake");
    }
    if (doc.contains("api")) {
      std::tie(c.listen_host, c.listen_port) =
          parse_listen(doc.at("api").value("listen", std::string("127.0.0.1:8080")));
    }
    if (doc.contains("devices")) {
      const auto& d = doc.at("devices");
      c.devices.duration_tolerance_s =
          d.value("duration_tolerance_s", c.devices.duration_tolerance_s);
      if (d.contains("fitbit_allowed_rates")) {
        c.devices.fitbit_allowed_rates = d.at("fitbit_allowed_rates").get<std::vector<int>>();
      }
    }
    if (doc.contains("dsp")) {
      const auto& d = doc.at("dsp");
      c.pipeline.dsp.baseline_window_s = d.value("baseline_window_s", 0.6);
      c.pipeline.dsp.window_policy =
          dsp::parse_window_policy(d.value("window_policy", std::string("central")));
    }
    if (doc.contains("pipeline")) {
      const auto& p = doc.at("pipeline");
      c.pipeline.poll_interval_s = p.value("poll_interval_s", 30.0);
      c.pipeline.worker_count = p.value("workers", 2);
      const auto clock = p.value("clock", std::string("real"));
      if (clock == "real") {
        c.pipeline.clock = pipeline::ClockMode::Real;
      } else if (clock == "simulated") {
        c.pipeline.clock = pipeline::ClockMode::Simulated;
      } else {
        throw Error(ErrorCode::ParseError, "pipeline.clock must be real or simulated");
      }
      if (p.contains("models")) {
        const auto& m = p.at("models");
        c.models = m.is_string() ? infer::read_registry_file(resolve(m.get<std::string>()))
                                 : infer::parse_model_descriptors(m, base_dir);
      }
      if (p.contains("injected_delays")) {
        const auto& d = p.at("injected_delays");
        c.pipeline.injected_delays = pipeline::InjectedDelays{
            d.value("pickup_s", 0.0), d.value("inference_s", 0.0), d.value("publish_s", 0.0)};
      }
    }
    if (doc.contains("feeds")) {
      for (const auto& f : doc.at("feeds")) {
        FeedSource s;
        s.name = f.at("name").get<std::string>();
        s.url = f.at("url").get<std::string>();
        s.poll_interval_s = f.value("poll_interval_s", 10.0);
        if (!(s.poll_interval_s > 0.0)) {
          throw Error(ErrorCode::ParseError, "feed poll_interval_s must be > 0");
        }
        c.feeds.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad config: ") + e.what());
  }
  c.pipeline.validate();
  return c;
}

PlatformConfig load_platform_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open config " + path.string());
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::ParseError, "config must be a JSON object");
  }
  return parse_platform_config(doc, fs::absolute(path).parent_path());
}

struct Platform::FeedLoop {
  FeedLoop(FeedSource s, Ingestor& ingestor)
      : source(std::move(s)), feed(source.url), connector(source.name, feed, ingestor) {}

  FeedSource source;
  HttpRecordFeed feed;
  FeedConnector connector;
};

Platform::Platform(PlatformConfig config, pipeline::Clock& clock)
    : config_(std::move(config)), clock_(clock) {
  lake::LakeOptions opts;
  opts.sync = config_.lake_sync;
  lake_ = std::make_unique<lake::Lake>(config_.lake_root, opts);
  models_ = infer::ModelRegistry(config_.models);
  for (const auto& slot : models_.slots()) {
    if (slot.load_error) {
      spdlog::error("model {} failed to load: {}", slot.descriptor.model_id,
                    slot.load_error->what());
    }
  }
  ingestor_ = std::make_unique<Ingestor>(*lake_, clock_, config_.devices);
  pipeline_ = std::make_unique<pipeline::Pipeline>(*lake_, models_, config_.pipeline, clock_);
  service_ = std::make_unique<ApiService>(*lake_, *ingestor_, clock_,
                                          [p = pipeline_.get()] { return p->last_tick(); });
  for (const auto& f : config_.feeds) feeds_.push_back(std::make_unique<FeedLoop>(f, *ingestor_));
}

Platform::~Platform() { stop(); }

std::string Platform::base_url() const {
  return "http://" + config_.listen_host + ":" + std::to_string(bound_port_);
}

void Platform::start() {
  server_ = std::make_unique<httplib::Server>();
  service_->install(*server_);
  if (config_.listen_port == 0) {
    bound_port_ = server_->bind_to_any_port(config_.listen_host);
  } else if (server_->bind_to_port(config_.listen_host, config_.listen_port)) {
    bound_port_ = config_.listen_port;
  } else {
    bound_port_ = -1;
  }
  if (bound_port_ <= 0) {
    throw Error(ErrorCode::IoError, "cannot listen on " + config_.listen_host + ":" +
                                        std::to_string(config_.listen_port));
  }
  threads_.emplace_back([this](std::stop_token) { server_->listen_after_bind(); });
  threads_.emplace_back([this](std::stop_token st) { pipeline_->run(st); });
  for (auto& f : feeds_) {
    threads_.emplace_back([this, loop = f.get()](std::stop_token st) {
      const auto interval_ms =
          static_cast<long long>(std::llround(loop->source.poll_interval_s * 1000.0));
      long long next = clock_.now().time_since_epoch().count();
      while (clock_.sleep_until(Timestamp{std::chrono::milliseconds{next}}, st)) {
        try {
          const auto r = loop->connector.pull();
          if (r.fetched > 0) {
            spdlog::info("feed {}: {} new, {} duplicate, {} rejected", loop->source.name,
                         r.ingested, r.duplicates, r.rejected);
          }
        } catch (const std::exception& e) {
          spdlog::warn("feed {}: {}", loop->source.name, e.what());
        }
        next = (clock_.now().time_since_epoch().count() / interval_ms + 1) * interval_ms;
      }
    });
  }
  spdlog::info("listening on {}", base_url());
}

void Platform::stop() {
  {
    std::lock_guard lock(stop_mu_);
    if (stopped_) return;
    stopped_ = true;
  }
  stop_cv_.notify_all();
  if (server_) server_->stop();
  for (auto& t : threads_) t.request_stop();
  threads_.clear();
}

void Platform::wait() {
  std::unique_lock lock(stop_mu_);
  stop_cv_.wait(lock, [this] { return stopped_; });
}

}  // namespace ecg::api

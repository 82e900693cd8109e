// Device simulators: vendor query APIs (Kardia, Fitbit) and the watch export
// uploader.

#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "ecg/core/error.hpp"
#include "ecg/pipeline/clock.hpp"
#include "ecg/sim/feed.hpp"
#include "ecg/sim/synth.hpp"
#include "signals.hpp"

namespace {

using nlohmann::json;

int serve_feed(ecg::DeviceKind device, const std::string& host, int port, std::uint64_t seed,
               const std::string& schedule_path) {
  ecg::pipeline::SystemClock clock;
  json doc = {{"items", json::array()}};
  if (!schedule_path.empty()) {
    std::ifstream in(schedule_path);
    if (!in) throw ecg::Error(ecg::ErrorCode::NotFound, "cannot open " + schedule_path);
    doc = json::parse(in);
  }
  doc["device"] = std::string(ecg::to_string(device));
  // Without an explicit origin, emit times count from startup.
  if (!doc.contains("origin")) doc["origin"] = ecg::format_rfc3339(clock.now());
  auto schedule = ecg::sim::parse_schedule(doc, seed);
  const auto count = schedule.items.size();
  ecg::sim::ScheduledFeed feed(std::move(schedule), clock,
                               "http://" + host + ":" + std::to_string(port));

  const auto signals = block_shutdown_signals();
  httplib::Server server;
  ecg::sim::install_feed_routes(server, feed);
  if (!server.bind_to_port(host, port)) {
    throw ecg::Error(ecg::ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
  }
  std::thread http([&] { server.listen_after_bind(); });
  spdlog::info("{} feed with {} scheduled records on {}:{}", ecg::to_string(device), count, host,
               port);
  wait_for_shutdown(signals);
  server.stop();
  http.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG device simulators"};
  app.require_subcommand(1);

  std::string host = "127.0.0.1";
  int port = 8081;
  std::uint64_t seed = 1;
  std::string schedule;

  auto add_feed = [&](const char* name, const char* help) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--host", host, "Listen host");
    cmd->add_option("--port", port, "Listen port")->required();
    cmd->add_option("--seed", seed, "Base seed for synthetic records");
    cmd->add_option("--schedule", schedule, "Schedule file (JSON)");
    return cmd;
  };
  auto* kardia = add_feed("kardia", "Serve a Kardia-style query API");
  auto* fitbit = add_feed("fitbit", "Serve a Fitbit-style query API");

  auto* watch = app.add_subcommand("watch", "Emit synthetic watch exports");
  std::string out_dir;
  std::string post_url;
  std::string external_id = "MRN-001";
  int count = 1;
  bool flat = false;
  auto* out_opt = watch->add_option("--out", out_dir, "Write .ecg.xml files into DIR");
  auto* post_opt = watch->add_option("--post", post_url, "POST to an API base URL");
  out_opt->excludes(post_opt);
  watch->add_option("--seed", seed, "Seed of the first export");
  watch->add_option("--count", count, "Number of exports (seeds S, S+1, ...)");
  watch->add_option("--external-id", external_id, "X-External-Id for --post");
  watch->add_flag("--flat", flat, "Emit a constant trace");

  auto* record = app.add_subcommand("record", "Write one synthetic device payload");
  std::string record_device = "kardia";
  std::string record_out;
  record->add_option("--device", record_device, "kardia | fitbit | watch")
      ->check(CLI::IsMember({"kardia", "fitbit", "watch"}));
  record->add_option("--seed", seed, "Seed");
  record->add_option("--out", record_out, "Output file")->required();
  record->add_flag("--flat", flat, "Emit a constant trace");

  CLI11_PARSE(app, argc, argv);

  try {
    if (kardia->parsed()) return serve_feed(ecg::DeviceKind::Kardia, host, port, seed, schedule);
    if (fitbit->parsed()) return serve_feed(ecg::DeviceKind::Fitbit, host, port, seed, schedule);
    if (record->parsed()) {
      ecg::sim::SynthSpec spec;
      spec.device = record_device == "watch"    ? ecg::DeviceKind::AppleWatch
                    : record_device == "fitbit" ? ecg::DeviceKind::Fitbit
                                                : ecg::DeviceKind::Kardia;
      spec.seed = seed;
      spec.flat = flat;
      std::ofstream out(record_out, std::ios::binary | std::ios::trunc);
      out << ecg::sim::serialize(spec);
      return out ? 0 : 1;
    }
    if (out_dir.empty() && post_url.empty()) {
      std::cerr << "watch: one of --out or --post is required\n";
      return 2;
    }
    int failures = 0;
    for (int i = 0; i < count; ++i) {
      ecg::sim::SynthSpec spec;
      spec.device = ecg::DeviceKind::AppleWatch;
      spec.seed = seed + static_cast<std::uint64_t>(i);
      spec.flat = flat;
      if (!out_dir.empty()) {
        std::cout << ecg::sim::emit_watch_export(spec, out_dir).string() << "\n";
      } else {
        const auto r = ecg::sim::post_watch_export(spec, post_url, external_id);
        std::cout << r.status << " " << r.body << "\n";
        if (r.status >= 300) ++failures;
      }
    }
    return failures == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "ecgsim: " << e.what() << "\n";
    return 1;
  }
}

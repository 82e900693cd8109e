// One PASS/FAIL line per primary acceptance criterion; exit status 1 if any
// criterion fails.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "ecg/api/platform.hpp"
#include "ecg/core/error.hpp"
#include "ecg/core/math.hpp"
#include "ecg/dsp/preprocess.hpp"
#include "ecg/infer/model.hpp"
#include "ecg/infer/registry.hpp"
#include "ecg/sim/bench.hpp"
#include "ecg/sim/feed.hpp"
#include "api_harness.hpp"
#include "lake_fixtures.hpp"
#include "nn_oracle.hpp"
#include "testutil.hpp"

using namespace ecg;
using nlohmann::json;
using ecg::testing::golden;
using ecg::testing::TempDir;

namespace {

// Collects failed sub-checks for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int report(const std::string& name, const std::function<void(Check&)>& body) {
  Check c;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.failures.push_back(std::string("exception: ") + e.what());
  }
  const bool ok = c.failures.empty();
  std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), c.detail.str().c_str());
  for (const auto& f : c.failures) std::printf("        - %s\n", f.c_str());
  std::fflush(stdout);
  return ok ? 0 : 1;
}

bool wait_for(const std::function<bool()>& pred, int timeout_ms = 10000) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return pred();
}

std::filesystem::path fixture_registry() {
  return ecg::testing::data_dir() / "models" / "registry.json";
}

// Table 1 reproduction with injected stage delays.
void table_one(Check& c) {
  struct Row {
    DeviceKind device;
    double upload, pickup, inference, publish, total;
  };
  const Row rows[] = {{DeviceKind::Kardia, 0.0, 19.17, 11.49, 2.35, 63.01},
                      {DeviceKind::AppleWatch, 0.7, 19.17, 13.51, 2.35, 65.73}};
  for (const auto& row : rows) {
    sim::TrialOptions o;
    o.device = row.device;
    o.n = 5;
    o.mode = sim::TrialMode::Injected;
    o.registry = fixture_registry();
    const auto start = std::chrono::steady_clock::now();
    const auto r = sim::run_time_trials(o);
    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string dev(to_string(row.device));
    c.expect(r.succeeded == 5, dev + ": " + std::to_string(r.succeeded) + "/5 trials succeeded");
    if (!r.means) continue;
    const auto& m = *r.means;
    c.expect(std::abs(m.total_s - row.total) <= 0.05,
             dev + " total " + fmt(m.total_s) + " vs " + fmt(row.total, 2) + " +-0.05");
    const std::pair<double, double> stages[] = {{m.acquisition_s, 30.0},
                                                {m.upload_s, row.upload},
                                                {m.pickup_s, row.pickup},
                                                {m.inference_s, row.inference},
                                                {m.publish_s, row.publish}};
    for (const auto& [got, want] : stages) {
      c.expect(std::abs(got - want) <= 0.01,
               dev + " stage mean " + fmt(got) + " vs " + fmt(want, 2) + " +-0.01");
    }
    c.expect(runtime < 10.0, dev + " runtime " + fmt(runtime, 2) + " s >= 10 s");
    if (!c.detail.str().empty()) c.detail << "; ";
    c.detail << dev << " total " << fmt(m.total_s, 2) << " s (" << fmt(runtime, 2) << " s run)";
  }
}

// Wall-mode protocol: pickup latency under uniform arrivals.
void wall_protocol(Check& c) {
  sim::TrialOptions o;
  o.device = DeviceKind::Kardia;
  o.n = 200;
  o.mode = sim::TrialMode::Wall;
  o.poll_interval_s = 30.0;
  o.seed = 20240301;
  o.registry = fixture_registry();
  const auto r = sim::run_time_trials(o);
  c.expect(r.succeeded == 200, std::to_string(r.succeeded) + "/200 trials succeeded");
  double sum = 0.0;
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& t : r.trials) {
    if (!t.timings) continue;
    sum += t.timings->pickup_s();
    worst = std::max(worst, t.timings->pickup_s());
    ++n;
  }
  const double mean = n > 0 ? sum / n : 0.0;
  c.expect(mean >= 12.0 && mean <= 18.0, "mean pickup " + fmt(mean) + " outside [12, 18]");
  c.expect(worst <= 30.0, "max pickup " + fmt(worst) + " > 30");
  c.detail << n << " trials, mean pickup " << fmt(mean, 2) << " s, max " << fmt(worst, 2)
           << " s";
}

// Golden Kardia record from the simulated vendor feed through the running
// platform to GET /v1/results.
void end_to_end(Check& c) {
  TempDir dir;
  const auto origin = parse_rfc3339("2024-03-01T12:00:00.000Z");
  pipeline::SimulatedClock clock(add_seconds(origin, 31));

  const auto schedule = sim::parse_schedule(
      json::parse(R"({"device":"kardia","origin":"2024-03-01T12:00:00.000Z",
                      "items":[{"at_s":30,"external_id":"MRN-001","seed":101}]})"),
      1);
  sim::ScheduledFeed feed(schedule, clock);
  httplib::Server feed_server;
  sim::install_feed_routes(feed_server, feed);
  const int feed_port = feed_server.bind_to_any_port("127.0.0.1");
  std::thread feed_thread([&] { feed_server.listen_after_bind(); });
  feed_server.wait_until_ready();

  api::PlatformConfig config;
  config.lake_root = dir.path() / "lake";
  config.lake_sync = false;
  config.listen_port = 0;
  config.pipeline.poll_interval_s = 30.0;
  config.pipeline.worker_count = 2;
  config.pipeline.clock = pipeline::ClockMode::Simulated;
  config.models = infer::read_registry_file(fixture_registry());
  config.feeds = {{"kardia", "http://127.0.0.1:" + std::to_string(feed_port), 10.0}};

  {
    api::Platform platform(config, clock);
    platform.start();
    httplib::Client client("127.0.0.1", platform.port());
    const auto id = content_hash(golden("kardia.json"));
    const auto results = [&] {
      auto res = client.Get("/v1/results/" + id);
      return res ? std::make_pair(res->status, json::parse(res->body, nullptr, false))
                 : std::make_pair(0, json());
    };

    c.expect(wait_for([&] { return platform.lake().index_size() == 1; }),
             "feed record was not ingested");
    const auto entry = platform.lake().find_entry(RecordingId::of_bytes(golden("kardia.json")));
    c.expect(entry.has_value(), "ingested bytes differ from the golden Kardia record");

    const auto stored = entry ? platform.lake().get_recording(entry->recording_id)
                              : lake::StoredRecording{device::parse_any(golden("kardia.json"))};
    c.expect(stored.recording.samples().size() == 3000, "recording does not hold 3000 samples");
    const auto window = dsp::preprocess(stored.recording);
    c.expect(window.values().size() == 5000 && window.window_start_s() == 10.0,
             "window is not the central 5000 samples of the 15000-sample signal");

    auto [status, body] = results();
    c.expect(status == 200 && body.value("status", "") == "pending",
             "status before the first tick is " + body.value("status", "?"));

    int ticks = 0;
    std::string last = body.value("status", "");
    auto next = add_seconds(origin, 60);
    while (ticks < 2 && last != "done") {
      clock.set(next);
      ++ticks;
      wait_for([&] { return platform.pipeline().last_tick() == next; });
      wait_for([&] { return results().second.value("status", "") == "done"; }, 2000);
      std::tie(status, body) = results();
      last = body.value("status", "");
      next = add_seconds(next, 30);
    }
    c.expect(last == "done", "not done after 2 ticks (status " + last + ")");
    c.expect(body.contains("results") && body["results"].size() == 3,
             "expected 3 model results");
    double worst = 0.0;
    std::vector<std::string> models;
    for (const auto& p : body.value("results", json::array())) {
      models.push_back(p["model_id"]);
      const auto& t = p["timings"];
      const double sum = 30.0 + t["upload_s"].get<double>() + t["pickup_s"].get<double>() +
                         t["inference_s"].get<double>() + t["publish_s"].get<double>();
      worst = std::max(worst, std::abs(t["total_s"].get<double>() - sum));
      c.expect(t["acquisition_s"] == 30.0, "acquisition stage is not 30 s");
    }
    std::sort(models.begin(), models.end());
    c.expect(models == std::vector<std::string>{"hcm", "lvsd", "structural"},
             "unexpected model ids");
    c.expect(worst <= 1e-9, "total_s deviates from 30 + stages by " + std::to_string(worst));
    c.detail << "pending -> " << last << " after " << ticks << " tick(s), |total - (30 + sum)| = "
             << worst;
    platform.stop();
  }
  feed_server.stop();
  feed_thread.join();
}

// Model shape contract.
void shape_contract(Check& c) {
  const auto registry = infer::read_registry_file(fixture_registry());
  for (const auto& d : registry) {
    const auto m = infer::load_model(d);
    c.expect(m.cnn.input_length == 5000 && m.cnn.final_length() == 39,
             d.model_id + " final length " + std::to_string(m.cnn.final_length()));
  }
  TempDir dir;
  const auto bytes = ecg::testing::read_file(ecg::testing::data_dir() / "models" / "lvsd.ecgw");
  const auto cases = ecg::testing::header_perturbations(bytes);
  int named = 0;
  for (const auto& p : cases) {
    const auto path = dir.path() / "perturbed.ecgw";
    std::ofstream(path, std::ios::binary | std::ios::trunc) << p.bytes;
    try {
      infer::load_model({"lvsd", infer::ModelKind::Cnn, path, 0.5});
      c.expect(false, p.layer + "." + p.field + " accepted");
    } catch (const Error& e) {
      const bool ok = e.code() == ErrorCode::ModelShapeError && e.subject() == p.layer;
      c.expect(ok, p.layer + "." + p.field + " reported as " + e.subject());
      named += ok ? 1 : 0;
    }
  }
  c.detail << "final length 39 for " << registry.size() << " models; " << named << "/"
           << cases.size() << " perturbations named their layer";
}

// Numerical oracles.
void numeric_oracles(Check& c) {
  const auto s = ecg::testing::run_forward_oracle(20240301, 200);
  c.expect(s.cases == 200, "oracle ran " + std::to_string(s.cases) + " cases");
  c.expect(s.worst_conv <= 1e-9, "conv deviation " + std::to_string(s.worst_conv));
  c.expect(s.worst_forward <= 1e-9, "forward deviation " + std::to_string(s.worst_forward));
  c.expect(s.worst_embedding <= 1e-9, "embedding deviation " + std::to_string(s.worst_embedding));

  const std::vector<double> in{1, 2, 3};
  c.expect(dsp::resample_linear(in, 1, 2) == std::vector<double>{1, 1.5, 2, 2.5, 3, 3},
           "resample [1,2,3] 1->2 Hz differs from [1,1.5,2,2.5,3,3]");
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_int_distribution<int> len(2, 300);
  const int rates[] = {100, 250, 300, 500};
  int outside = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x(len(rng));
    for (auto& v : x) v = u(rng);
    const auto y = dsp::resample_linear(x, rates[i % 4], rates[(i / 4) % 4]);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    for (double v : y) outside += (v < *lo || v > *hi) ? 1 : 0;
  }
  c.expect(outside == 0, std::to_string(outside) + " resampled values outside [min, max]");

  double worst_mean = 0.0;
  double worst_sd = 0.0;
  for (const char* f : {"kardia.json", "watch.ecg.xml", "fitbit.json", "kardia-flat.json"}) {
    const auto rec = device::parse_any(golden(f));
    try {
      const auto w = dsp::preprocess(rec);
      const auto v = w.values();
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_sd = std::max(worst_sd, std::abs(std::sqrt(ss / v.size()) - 1.0));
    } catch (const Error& e) {
      c.expect(std::string(f) == "kardia-flat.json" && e.code() == ErrorCode::FlatSignal,
               std::string(f) + ": " + e.what());
    }
  }
  c.expect(worst_mean < 1e-9, "standardized mean " + std::to_string(worst_mean));
  c.expect(worst_sd < 1e-6, "standardized sd error " + std::to_string(worst_sd));
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "conv %.1e, forward %.1e over 200 cases; resample exact; |mean| %.1e, |sd-1| %.1e",
                s.worst_conv, s.worst_forward, worst_mean, worst_sd);
  c.detail << buf;
}

// Storage properties.
void storage(Check& c) {
  lake::LakeOptions opts;
  opts.sync = false;
  {
    TempDir dir;
    lake::Lake lake(dir.path(), opts);
    const auto p = ecg::testing::synthetic_payload(DeviceKind::Kardia, 1,
                                                   lake.register_study("MRN-001"));
    lake.put_recording(p.raw, p.parsed);
    const auto before = ecg::testing::read_file(dir.path() / "index.jsonl");
    bool dup = false;
    try {
      lake.put_recording(p.raw, p.parsed);
    } catch (const Error& e) {
      dup = e.code() == ErrorCode::AlreadyExists;
    }
    c.expect(dup, "second put did not raise AlreadyExists");
    c.expect(ecg::testing::read_file(dir.path() / "index.jsonl") == before &&
                 lake.index_size() == 1,
             "index changed on duplicate put");
  }
  {
    TempDir dir;
    lake::Lake lake(dir.path(), opts);
    const auto r = ecg::testing::concurrent_puts(lake, 2, 500, 5000);
    c.expect(r.stored == 1000 && r.failures == 0,
             "concurrent puts stored " + std::to_string(r.stored));
    c.expect(r.gap_free, "index_seq has gaps or duplicates");
  }
  int mismatches = 0;
  {
    TempDir dir;
    lake::Lake lake(dir.path(), opts);
    const auto study = lake.register_study("MRN-blob");
    const auto base = ecg::testing::synthetic_payload(DeviceKind::Kardia, 2, study);
    std::mt19937_64 rng(1000);
    for (int i = 0; i < 1000; ++i) {
      auto raw = base.raw;
      std::string noise(static_cast<std::size_t>(i % 97), '\0');
      for (auto& ch : noise) ch = static_cast<char>(rng());
      raw.bytes += noise + std::to_string(i);
      EcgRecording::Fields f;
      f.recording_id = RecordingId::of_bytes(raw.bytes);
      f.study_id = study;
      f.sample_rate_hz = 100;
      f.samples_mv = {0.0, 1.0};
      lake.put_recording(raw, EcgRecording(std::move(f)));
      mismatches += lake.get_raw(RecordingId::of_bytes(raw.bytes)) == raw.bytes ? 0 : 1;
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " blobs differ after round trip");
  {
    TempDir dir;
    {
      lake::Lake lake(dir.path(), opts);
      std::uint64_t seed = 10;
      for (const char* ext : {"MRN-001", "MRN-002"}) {
        const auto study = lake.register_study(ext);
        for (int i = 0; i < 3; ++i) {
          const auto p = ecg::testing::synthetic_payload(DeviceKind::Kardia, seed++, study);
          lake.put_recording(p.raw, p.parsed);
        }
      }
    }
    const auto outside = ecg::testing::slurp_tree(dir.path(), dir.path() / "registry");
    c.expect(outside.find("MRN-001") == std::string::npos &&
                 outside.find("MRN-002") == std::string::npos,
             "external id found outside the registry");
  }
  c.detail << "dedupe, 2x500 gap-free index, 1000 byte-exact blobs, no external ids outside "
              "registry/";
}

// API conformance against the published schemas.
void api_conformance(Check& c) {
  ecg::testing::ApiHarness h;
  int validated = 0;
  auto conforms = [&](const ecg::testing::ApiHarness::Response& r, const std::string& schema,
                      const std::string& what) {
    const auto v = h.violations(r, schema);
    c.expect(v.empty(), what + ": " + (v.empty() ? "" : v.front()));
    ++validated;
  };
  std::vector<std::string> ids;
  for (const char* f : {"kardia.json", "watch.ecg.xml", "fitbit.json", "kardia-flat.json"}) {
    const auto r = h.post(golden(f), "MRN-001");
    c.expect(r.status == 201, std::string("POST ") + f + " -> " + std::to_string(r.status));
    conforms(r, "recording-created", std::string("POST ") + f);
    ids.push_back(content_hash(golden(f)));
  }
  const auto dup = h.post(golden("kardia.json"), "MRN-001");
  c.expect(dup.status == 200 && dup.body.value("duplicate", false), "duplicate not flagged 200");
  conforms(dup, "recording-created", "duplicate POST");
  const auto garbage = h.post("\x89PNG not an ecg", "MRN-001");
  c.expect(garbage.status == 422, "garbage -> " + std::to_string(garbage.status));
  conforms(garbage, "error", "garbage POST");

  conforms(h.get("/v1/results/" + ids[0]), "results", "pending results");
  h.tick();
  for (const auto& id : ids) {
    conforms(h.get("/v1/recordings/" + id), "recording", "recording");
    conforms(h.get("/v1/recordings/" + id + "/waveform"), "waveform", "waveform");
    conforms(h.get("/v1/results/" + id), "results", "results");
  }
  conforms(h.get("/v1/recordings"), "recording-list", "listing");
  const auto created = h.post(golden("kardia.json"), "MRN-001");
  conforms(h.get("/v1/studies/" + created.body.value("study_id", "") + "/timeline"), "timeline",
           "timeline");
  conforms(h.get("/v1/health"), "health", "health");

  const std::string unknown(64, 'f');
  for (const auto& path : {"/v1/recordings/" + unknown, "/v1/recordings/" + unknown + "/waveform",
                           "/v1/results/" + unknown,
                           "/v1/studies/" + std::string(32, '0') + "/timeline"}) {
    const auto r = h.get(path);
    c.expect(r.status == 404, path + " -> " + std::to_string(r.status));
    conforms(r, "error", path);
  }
  c.detail << validated << " responses schema-valid; unknown ids 404, garbage 422, duplicate 200";
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  int failed = 0;
  failed += report("Table 1 reproduction (injected)", table_one);
  failed += report("Five-trial protocol (wall, 200 arrivals)", wall_protocol);
  failed += report("End-to-end liveness", end_to_end);
  failed += report("Model shape contract", shape_contract);
  failed += report("Numerical oracles", numeric_oracles);
  failed += report("Storage properties", storage);
  failed += report("API conformance", api_conformance);
  std::printf("%d/7 criteria passed\n", 7 - failed);
  return failed == 0 ? 0 : 1;
}

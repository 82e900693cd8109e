#include "ecg/sim/bench.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <random>
#include <sstream>

#include "ecg/api/feed.hpp"
#include "ecg/api/ingest.hpp"
#include "ecg/infer/fixture.hpp"
#include "ecg/infer/registry.hpp"
#include "ecg/lake/codec.hpp"
#include "ecg/lake/lake.hpp"
#include "ecg/pipeline/pipeline.hpp"
#include "ecg/sim/feed.hpp"
#include "ecg/sim/synth.hpp"

namespace ecg::sim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TrialMode mode) noexcept {
  return mode == TrialMode::Injected ? "injected" : "wall";
}

TrialMode parse_trial_mode(std::string_view text) {
  if (text == "injected") return TrialMode::Injected;
  if (text == "wall") return TrialMode::Wall;
  throw Error(ErrorCode::BadRequest, "unknown trial mode '" + std::string(text) + "'");
}

StageDelays reference_delays(DeviceKind device) {
  if (device == DeviceKind::AppleWatch) return {0.7, 19.17, 13.51, 2.35};
  return {0.0, 19.17, 11.49, 2.35};
}

StageMeans aggregate_trials(std::span<const StageTimings> trials) {
  if (trials.empty()) throw Error(ErrorCode::BadRequest, "no trials to aggregate");
  StageMeans m;
  for (const auto& t : trials) {
    m.acquisition_s += t.acquisition_s();
    m.upload_s += t.upload_s();
    m.pickup_s += t.pickup_s();
    m.inference_s += t.inference_s();
    m.publish_s += t.publish_s();
    m.total_s += t.total_s();
  }
  const auto n = static_cast<double>(trials.size());
  m.acquisition_s /= n;
  m.upload_s /= n;
  m.pickup_s /= n;
  m.inference_s /= n;
  m.publish_s /= n;
  m.total_s /= n;
  m.count = trials.size();
  return m;
}

namespace {

class ScratchDir {
 public:
  explicit ScratchDir(fs::path requested) {
    if (!requested.empty()) {
      fs::create_directories(requested);
      path_ = std::move(requested);
      return;
    }
    std::string tmpl = (fs::temp_directory_path() / "ecgbench-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
      throw Error(ErrorCode::IoError, "cannot create a scratch directory");
    }
    path_ = tmpl;
    owned_ = true;
  }
  ~ScratchDir() {
    std::error_code ec;
    if (owned_) fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
  bool owned_ = false;
};

constexpr const char* kBenchSubject = "BENCH-SUBJECT-01";

}  // namespace

TimingReport run_time_trials(const TrialOptions& options) {
  if (options.n < 1) throw Error(ErrorCode::BadRequest, "n must be >= 1");
  if (!(options.poll_interval_s > 0.0)) {
    throw Error(ErrorCode::BadRequest, "poll_interval_s must be > 0");
  }
  const auto started = std::chrono::steady_clock::now();

  TimingReport report;
  report.device = options.device;
  report.mode = options.mode;
  report.poll_interval_s = options.poll_interval_s;
  report.requested = options.n;

  ScratchDir dir(options.workdir);
  const auto registry_path = options.registry.empty()
                                 ? infer::write_fixture_registry(dir.path() / "models")
                                 : options.registry;
  const auto models = infer::ModelRegistry::from_file(registry_path);
  lake::Lake lake(dir.path() / "lake");

  const Timestamp origin = SynthSpec::default_recorded_at();
  pipeline::SimulatedClock clock(origin);
  api::Ingestor ingestor(lake, clock);

  pipeline::PipelineConfig config;
  config.poll_interval_s = options.poll_interval_s;
  config.worker_count = 1;
  config.clock = pipeline::ClockMode::Simulated;
  if (options.mode == TrialMode::Injected) {
    const auto d = options.delays.value_or(reference_delays(options.device));
    config.injected_delays = pipeline::InjectedDelays{d.pickup_s, d.inference_s, d.publish_s};
    ingestor.set_fixed_upload_s(d.upload_s);
  }
  pipeline::Pipeline pipe(lake, models, config, clock);

  ScheduledFeed feed(Schedule{options.device, origin, {}}, clock, "sim://bench");
  api::FeedConnector connector("bench", feed, ingestor);

  std::mt19937_64 rng(options.seed);
  const auto interval_ms = static_cast<std::int64_t>(std::llround(options.poll_interval_s * 1000));

  std::vector<StageTimings> ok;
  for (int i = 0; i < options.n; ++i) {
    TrialRecord trial;
    trial.index = i + 1;
    const Timestamp tick = origin + std::chrono::milliseconds(interval_ms * i);
    // Arrival in (tick, tick + interval]; picked up by the tick that closes it.
    std::int64_t offset_ms = interval_ms / 2;
    if (options.mode == TrialMode::Wall) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      offset_ms = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(std::ceil(u * static_cast<double>(interval_ms))), 1,
          interval_ms);
    }
    trial.arrival_offset_s = static_cast<double>(offset_ms) / 1000.0;
    try {
      clock.set(tick + std::chrono::milliseconds(offset_ms));

      SynthSpec spec;
      spec.device = options.device;
      spec.seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(i);
      spec.recorded_at = add_seconds(clock.now(), -spec.duration_s);
      const auto bytes = serialize(spec);
      const auto id = RecordingId::of_bytes(bytes);

      if (options.device == DeviceKind::AppleWatch) {
        ingestor.ingest({bytes, kBenchSubject, DeviceKind::AppleWatch, "bench:upload"});
      } else {
        feed.push({seconds_between(origin, clock.now()), kBenchSubject, spec});
        const auto pulled = connector.pull();
        if (pulled.ingested != 1) {
          throw Error(ErrorCode::IoError, "feed pull ingested " +
                                              std::to_string(pulled.ingested) + " records");
        }
      }

      clock.set(tick + std::chrono::milliseconds(interval_ms));
      pipe.tick();

      const auto results = lake.get_results(id);
      if (results.empty()) {
        const auto notes = lake.get_notes(id);
        throw Error(ErrorCode::NotFound,
                    notes.empty() ? "no result after the pickup tick" : notes.front().reason);
      }
      trial.timings = results.front().timings;
      trial.ok = true;
      ok.push_back(*trial.timings);
    } catch (const std::exception& e) {
      trial.error = e.what();
      spdlog::warn("trial {} failed: {}", trial.index, e.what());
    }
    report.trials.push_back(std::move(trial));
  }

  report.succeeded = ok.size();
  if (!ok.empty()) report.means = aggregate_trials(ok);
  report.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

namespace {

// Column headings of the reference timing table.
const std::vector<std::string>& columns() {
  static const std::vector<std::string> c = {
      "Device",
      "Time to record ECG",
      "Mean time for data to be uploaded to AWS S3",
      "Mean time for new ECG data to be picked up by the backend",
      "Mean time to run predictive models on the data",
      "Mean turnaround time for results to be displayed on the dashboard",
      "Mean time for the entire process"};
  return c;
}

std::string device_label(DeviceKind d) {
  switch (d) {
    case DeviceKind::AppleWatch:
      return "Apple Watch";
    case DeviceKind::Kardia:
      return "Kardia";
    case DeviceKind::Fitbit:
      return "Fitbit";
  }
  return "?";
}

std::string fixed2(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

}  // namespace

json to_json(const TimingReport& r) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    json j = {{"index", t.index}, {"ok", t.ok}, {"arrival_offset_s", t.arrival_offset_s}};
    if (t.timings) j["timings"] = lake::to_json(*t.timings);
    if (!t.ok) j["error"] = t.error;
    trials.push_back(std::move(j));
  }
  json j = {{"device", std::string(ecg::to_string(r.device))},
            {"mode", std::string(to_string(r.mode))},
            {"poll_interval_s", r.poll_interval_s},
            {"requested", r.requested},
            {"succeeded", r.succeeded},
            {"runtime_s", r.runtime_s},
            {"columns", columns()},
            {"trials", std::move(trials)}};
  if (r.means) {
    const auto& m = *r.means;
    j["means"] = {{"acquisition_s", m.acquisition_s}, {"upload_s", m.upload_s},
                  {"pickup_s", m.pickup_s},           {"inference_s", m.inference_s},
                  {"publish_s", m.publish_s},         {"total_s", m.total_s},
                  {"count", m.count}};
  } else {
    j["means"] = nullptr;
  }
  return j;
}

std::string to_markdown(const TimingReport& r) {
  std::ostringstream out;
  out << "# Time trials: " << device_label(r.device) << " (" << to_string(r.mode) << " mode)\n\n";
  out << "All time values in seconds. Poll interval " << fixed2(r.poll_interval_s) << " s; "
      << r.succeeded << " of " << r.requested << " trials succeeded.\n\n";
  const auto& cols = columns();
  out << "|";
  for (const auto& c : cols) out << " " << c << " |";
  out << "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i == 0 ? "---" : "---:") << "|";
  out << "\n";
  if (r.means) {
    const auto& m = *r.means;
    out << "| " << device_label(r.device) << " | " << fixed2(m.acquisition_s) << " | "
        << fixed2(m.upload_s) << " | " << fixed2(m.pickup_s) << " | " << fixed2(m.inference_s)
        << " | " << fixed2(m.publish_s) << " | " << fixed2(m.total_s) << " |\n";
  }
  out << "\n## Per trial\n\n| Trial | Record | Upload | Pickup | Models | Results | Total |\n"
      << "|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& t : r.trials) {
    if (!t.ok) {
      out << "| " << t.index << " | failed: " << t.error << " ||||||\n";
      continue;
    }
    const auto& s = *t.timings;
    out << "| " << t.index << " | " << fixed2(s.acquisition_s()) << " | " << fixed2(s.upload_s())
        << " | " << fixed2(s.pickup_s()) << " | " << fixed2(s.inference_s()) << " | "
        << fixed2(s.publish_s()) << " | " << fixed2(s.total_s()) << " |\n";
  }
  return out.str();
}

}  // namespace ecg::sim

#include "ecg/pipeline/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <latch>
#include <thread>

#include "json.hpp"

namespace ecg::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::validate() const {
  if (!(poll_interval_s > 0.0) || !std::isfinite(poll_interval_s)) {
    throw Error(ErrorCode::BadRequest, "poll_interval_s must be > 0");
  }
  if (worker_count < 1) throw Error(ErrorCode::BadRequest, "worker_count must be >= 1");
  if (injected_delays) {
    const auto& d = *injected_delays;
    for (double v : {d.pickup_s, d.inference_s, d.publish_s}) {
      if (!(v >= 0.0)) throw Error(ErrorCode::BadRequest, "injected delays must be >= 0");
    }
  }
}

// Bounded queue feeding a fixed set of worker threads.
class Pipeline::Workers {
 public:
  Workers(int count, std::size_t capacity) : capacity_(capacity) {
    for (int i = 0; i < count; ++i) {
      threads_.emplace_back([this](std::stop_token st) { loop(st); });
    }
  }

  ~Workers() {
    for (auto& t : threads_) t.request_stop();
    cv_.notify_all();
  }

  void submit(std::function<void()> job) {
    std::unique_lock lock(mu_);
    space_.wait(lock, [&] { return queue_.size() < capacity_; });
    queue_.push_back(std::move(job));
    cv_.notify_one();
  }

 private:
  void loop(std::stop_token st) {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mu_);
        if (!cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      space_.notify_one();
      job();
    }
  }

  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable_any cv_;
  std::condition_variable space_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::jthread> threads_;
};

Pipeline::Pipeline(lake::Lake& lake, const infer::ModelRegistry& models,
                   PipelineConfig config, Clock& clock, const lake::IndexReader* reader)
    : lake_(lake),
      models_(models),
      config_(std::move(config)),
      clock_(clock),
      reader_(reader != nullptr ? *reader : lake) {
  config_.validate();
  cursor_ = load_cursor(lake_);
  workers_ = std::make_unique<Workers>(config_.worker_count,
                                       static_cast<std::size_t>(config_.worker_count) * 4);
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::cursor_path(const lake::Lake& lake) {
  return lake.state_dir() / "pipeline.cursor";
}

lake::IndexSeq Pipeline::load_cursor(const lake::Lake& lake) {
  std::ifstream in(cursor_path(lake));
  lake::IndexSeq seq = 0;
  if (in >> seq) return seq;
  return 0;
}

void Pipeline::store_cursor(lake::IndexSeq seq) {
  const auto path = cursor_path(lake_);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << seq << "\n";
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "cannot persist pipeline cursor");
  }
  fs::rename(tmp, path);
  cursor_ = seq;
}

std::optional<Timestamp> Pipeline::last_tick() const {
  std::lock_guard lock(tick_mu_);
  return last_tick_;
}

PollResult Pipeline::poll_once(lake::IndexSeq cursor) const {
  PollResult r;
  r.cursor = cursor;
  try {
    r.entries = reader_.list_since(cursor);
  } catch (const Error& e) {
    r.error = e;
    return r;
  }
  for (const auto& e : r.entries) r.cursor = std::max(r.cursor, e.index_seq);
  return r;
}

namespace {

using Stopwatch = std::chrono::steady_clock;

double elapsed_s(Stopwatch::time_point start) {
  return std::chrono::duration<double>(Stopwatch::now() - start).count();
}

bool is_rejection(ErrorCode code) {
  return code == ErrorCode::TooShort || code == ErrorCode::FlatSignal ||
         code == ErrorCode::BadWindow;
}

}  // namespace

std::vector<PredictionResult> Pipeline::process_entry(const lake::LakeEntry& entry) {
  return process_entry(entry, clock_.now());
}

std::vector<PredictionResult> Pipeline::process_entry(const lake::LakeEntry& entry,
                                                      Timestamp dequeued_at) {
  const auto& id = entry.recording_id;
  if (lake_.has_outcome(id)) return {};

  const auto stored = lake_.get_recording(id);
  const auto infer_start = Stopwatch::now();
  std::optional<NormalizedWindow> window;
  try {
    window = dsp::preprocess(stored.recording, config_.dsp);
  } catch (const Error& e) {
    if (!is_rejection(e.code())) throw;
    lake_.put_note({id, lake::NoteKind::Rejected, {}, std::string(error_code_name(e.code())),
                    e.message(), clock_.now()});
    return {};
  }
  const auto outcomes = infer::predict_all(*window, models_);
  double inference_s = elapsed_s(infer_start);

  json doc = {{"recording_id", id.str()}, {"window_start_s", window->window_start_s()}};
  json models = json::array();
  for (const auto& o : outcomes) {
    if (o.ok()) {
      models.push_back({{"model_id", o.model_id}, {"probability", *o.probability}});
    } else {
      models.push_back({{"model_id", o.model_id}, {"error", o.error->what()}});
    }
  }
  doc["models"] = std::move(models);
  const auto publish_start = Stopwatch::now();
  lake_.stage_results(id, doc.dump());
  double publish_s = elapsed_s(publish_start);

  double pickup_s = std::max(0.0, seconds_between(entry.received_at, dequeued_at));
  if (config_.injected_delays) {
    pickup_s = config_.injected_delays->pickup_s;
    inference_s = config_.injected_delays->inference_s;
    publish_s = config_.injected_delays->publish_s;
  }
  const StageTimings timings(kAcquisitionSeconds, stored.upload_s, pickup_s, inference_s,
                             publish_s);

  const auto produced_at = clock_.now();
  std::vector<PredictionResult> results;
  for (const auto& o : outcomes) {
    if (o.ok()) {
      auto r = PredictionResult::make(id, o.model_id, *o.probability, o.threshold, timings,
                                      produced_at);
      lake_.put_result(r);
      results.push_back(std::move(r));
    } else {
      lake_.put_note({id, lake::NoteKind::ModelError, o.model_id,
                      std::string(error_code_name(o.error->code())), o.error->message(),
                      produced_at});
    }
  }
  return results;
}

TickReport Pipeline::tick(std::stop_token stop) {
  TickReport report;
  report.at = clock_.now();
  {
    std::lock_guard lock(tick_mu_);
    last_tick_ = report.at;
  }
  const auto start_cursor = cursor_.load();
  auto polled = poll_once(start_cursor);
  report.cursor = start_cursor;
  if (polled.error) {
    report.lake_error = true;
    spdlog::warn("poll failed, retrying next tick: {}", polled.error->what());
    return report;
  }
  report.polled = polled.entries.size();
  if (polled.entries.empty()) return report;

  enum class State : int { Pending, Done, Failed, Abandoned };
  std::vector<std::atomic<int>> state(polled.entries.size());
  std::latch finished(static_cast<std::ptrdiff_t>(polled.entries.size()));

  for (std::size_t i = 0; i < polled.entries.size(); ++i) {
    workers_->submit([&, i] {
      const auto& entry = polled.entries[i];
      if (stop.stop_requested()) {
        state[i] = static_cast<int>(State::Abandoned);
        finished.count_down();
        return;
      }
      const auto dequeued_at = clock_.now();
      try {
        process_entry(entry, dequeued_at);
        state[i] = static_cast<int>(State::Done);
      } catch (const std::exception& e) {
        spdlog::error("processing {} failed: {}", entry.recording_id.str(), e.what());
        try {
          lake_.put_note({entry.recording_id, lake::NoteKind::Failed, {}, "Failed", e.what(),
                          clock_.now()});
        } catch (const std::exception& inner) {
          spdlog::error("cannot record failure for {}: {}", entry.recording_id.str(),
                        inner.what());
        }
        state[i] = static_cast<int>(State::Failed);
      }
      finished.count_down();
    });
  }
  finished.wait();

  // Advance only across the leading run of finished entries; abandoned ones
  // are picked up again after a restart.
  lake::IndexSeq next = start_cursor;
  for (std::size_t i = 0; i < polled.entries.size(); ++i) {
    const auto s = static_cast<State>(state[i].load());
    if (s == State::Done) ++report.processed;
    if (s == State::Failed) ++report.failed;
    if (s == State::Abandoned) ++report.abandoned;
  }
  for (std::size_t i = 0; i < polled.entries.size(); ++i) {
    if (static_cast<State>(state[i].load()) == State::Abandoned) break;
    next = polled.entries[i].index_seq;
  }
  store_cursor(next);
  report.cursor = next;
  return report;
}

void Pipeline::run(std::stop_token stop) {
  const auto interval_ms =
      static_cast<long long>(std::llround(config_.poll_interval_s * 1000.0));
  const auto now_ms = clock_.now().time_since_epoch().count();
  // First tick on the next multiple of the interval (now, if aligned).
  long long next_ms = ((now_ms + interval_ms - 1) / interval_ms) * interval_ms;
  while (clock_.sleep_until(Timestamp{std::chrono::milliseconds{next_ms}}, stop)) {
    tick(stop);
    const auto after = clock_.now().time_since_epoch().count();
    next_ms += interval_ms;
    if (next_ms <= after) next_ms = (after / interval_ms + 1) * interval_ms;
  }
}

}  // namespace ecg::pipeline

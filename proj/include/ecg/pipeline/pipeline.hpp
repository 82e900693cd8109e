#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stop_token>
#include <vector>

#include "ecg/core/error.hpp"
#include "ecg/core/types.hpp"
#include "ecg/dsp/preprocess.hpp"
#include "ecg/infer/registry.hpp"
#include "ecg/lake/lake.hpp"
#include "ecg/pipeline/clock.hpp"

namespace ecg::pipeline {

// Fixed stage durations substituted for measured ones (bench mode).
struct InjectedDelays {
  double pickup_s = 0.0;
  double inference_s = 0.0;
  double publish_s = 0.0;
};

enum class ClockMode { Real, Simulated };

struct PipelineConfig {
  double poll_interval_s = 30.0;
  int worker_count = 2;
  ClockMode clock = ClockMode::Real;
  std::optional<InjectedDelays> injected_delays;
  dsp::DspConfig dsp;

  // Throws BadRequest unless poll_interval_s > 0 and worker_count >= 1.
  void validate() const;
};

struct PollResult {
  std::vector<lake::LakeEntry> entries;
  lake::IndexSeq cursor = 0;
  std::optional<Error> error;  // set when the lake could not be read
};

struct TickReport {
  Timestamp at{};
  std::size_t polled = 0;
  std::size_t processed = 0;
  std::size_t failed = 0;
  std::size_t abandoned = 0;  // not started because shutdown was requested
  lake::IndexSeq cursor = 0;
  bool lake_error = false;
};

// Poll-and-infer loop. One poller owns the cursor; each tick fans the new
// entries out to worker_count threads, waits for the batch, then persists
// the cursor. Results are written at most once per recording.
class Pipeline {
 public:
  // `reader` overrides where entries are discovered (defaults to the lake).
  Pipeline(lake::Lake& lake, const infer::ModelRegistry& models, PipelineConfig config,
           Clock& clock, const lake::IndexReader* reader = nullptr);
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  // Entries after `cursor`; on a lake failure returns no entries, the cursor
  // unchanged, and the error.
  PollResult poll_once(lake::IndexSeq cursor) const;

  // preprocess -> predict_all -> stage + publish results. Returns the stored
  // predictions; empty when the recording was already processed or rejected.
  std::vector<PredictionResult> process_entry(const lake::LakeEntry& entry,
                                              Timestamp dequeued_at);
  std::vector<PredictionResult> process_entry(const lake::LakeEntry& entry);

  TickReport tick(std::stop_token stop = {});

  // Ticks at every multiple of poll_interval_s on the configured clock until
  // `stop` is requested. The in-flight batch drains before returning.
  void run(std::stop_token stop);

  lake::IndexSeq cursor() const { return cursor_.load(); }
  std::optional<Timestamp> last_tick() const;
  const PipelineConfig& config() const noexcept { return config_; }

  static std::filesystem::path cursor_path(const lake::Lake& lake);
  static lake::IndexSeq load_cursor(const lake::Lake& lake);

 private:
  class Workers;

  void store_cursor(lake::IndexSeq seq);

  lake::Lake& lake_;
  const infer::ModelRegistry& models_;
  PipelineConfig config_;
  Clock& clock_;
  const lake::IndexReader& reader_;
  std::atomic<lake::IndexSeq> cursor_{0};
  mutable std::mutex tick_mu_;
  std::optional<Timestamp> last_tick_;
  std::unique_ptr<Workers> workers_;
};

}  // namespace ecg::pipeline

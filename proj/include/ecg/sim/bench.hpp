#pragma once

// Turnaround time trials: acquire -> upload -> poll -> infer -> publish,
// driven on a simulated clock against a scratch lake and the fixture models.
//
// injected: pickup/inference/publish (and upload) are fixed values, so the
//           report reproduces a reference row exactly.
// wall:     each record lands at a uniformly random point inside the poll
//           interval; pickup is the simulated wait for the next tick and
//           inference/publish are measured on this machine.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecg/core/types.hpp"

namespace ecg::sim {

enum class TrialMode { Injected, Wall };

std::string_view to_string(TrialMode mode) noexcept;
TrialMode parse_trial_mode(std::string_view text);

struct StageDelays {
  double upload_s = 0.0;
  double pickup_s = 0.0;
  double inference_s = 0.0;
  double publish_s = 0.0;
};

// Reference stage values per device (watch: 0.7/19.17/13.51/2.35,
// Kardia: 0/19.17/11.49/2.35).
StageDelays reference_delays(DeviceKind device);

struct TrialOptions {
  DeviceKind device = DeviceKind::Kardia;
  int n = 5;
  TrialMode mode = TrialMode::Injected;
  double poll_interval_s = 30.0;
  std::uint64_t seed = 1;
  std::optional<StageDelays> delays;   // injected mode; defaults to reference_delays
  std::filesystem::path workdir;       // empty: a fresh temp directory, removed afterwards
  std::filesystem::path registry;      // empty: fixture models written into the workdir
};

struct TrialRecord {
  int index = 0;
  bool ok = false;
  std::optional<StageTimings> timings;
  std::string error;
  double arrival_offset_s = 0.0;  // position inside the poll interval
};

struct StageMeans {
  double acquisition_s = 0.0;
  double upload_s = 0.0;
  double pickup_s = 0.0;
  double inference_s = 0.0;
  double publish_s = 0.0;
  double total_s = 0.0;  // mean of per-trial totals
  std::size_t count = 0;
};

// Throws BadRequest for an empty input.
StageMeans aggregate_trials(std::span<const StageTimings> trials);

struct TimingReport {
  DeviceKind device = DeviceKind::Kardia;
  TrialMode mode = TrialMode::Injected;
  double poll_interval_s = 30.0;
  int requested = 0;
  std::vector<TrialRecord> trials;
  std::optional<StageMeans> means;  // over successful trials
  std::size_t succeeded = 0;
  double runtime_s = 0.0;
};

TimingReport run_time_trials(const TrialOptions& options);

nlohmann::json to_json(const TimingReport& report);
std::string to_markdown(const TimingReport& report);

}  // namespace ecg::sim

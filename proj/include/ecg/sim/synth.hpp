#pragma once

// Seeded synthetic ECG-like signals and the device wire formats they are
// shipped in. Same spec + seed -> same bytes on every platform: the PRNG is
// mt19937_64 with hand-rolled uniform and Box-Muller draws.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecg/core/types.hpp"

namespace ecg::sim {

struct SynthSpec {
  DeviceKind device = DeviceKind::Kardia;
  std::uint64_t seed = 1;
  int rate_hz = 0;  // 0: the device's native rate
  double duration_s = 30.0;
  double heart_rate_bpm = 72.0;
  double amplitude_uv = 1000.0;
  double noise_uv = 25.0;
  double wander_uv = 150.0;
  double wander_hz = 0.25;
  bool flat = false;  // constant trace, rejected downstream as FlatSignal
  Timestamp recorded_at = default_recorded_at();

  int effective_rate_hz() const noexcept;
  static Timestamp default_recorded_at();
};

// 500 Hz watch, 100 Hz Kardia, 250 Hz Fitbit.
int native_rate_hz(DeviceKind device) noexcept;

// Integer microvolts, round(duration_s * rate) samples.
std::vector<std::int32_t> synthesize(const SynthSpec& spec);

std::string watch_export_xml(int rate_hz, Timestamp recorded_at,
                             const std::vector<std::int32_t>& samples_uv);
// Compact JSON, keys in lexicographic order.
std::string device_record_json(DeviceKind device, int rate_hz, Timestamp recorded_at,
                               const std::vector<std::int32_t>& samples_uv);

// The spec's device format.
std::string serialize(const SynthSpec& spec);

// Writes <dir>/watch-<seed>.ecg.xml and returns its path. Throws BadRequest
// unless the spec is a 30 s, 500 Hz watch recording.
std::filesystem::path emit_watch_export(const SynthSpec& spec, const std::filesystem::path& dir);

struct PostOutcome {
  int status = 0;
  std::string body;
};

// POSTs the export to <base_url>/v1/recordings. Throws IoError when the
// server cannot be reached.
PostOutcome post_watch_export(const SynthSpec& spec, const std::string& base_url,
                              const std::string& external_id);

}  // namespace ecg::sim

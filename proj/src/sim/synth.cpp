#include "ecg/sim/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>

#include "httplib.h"
#include "json.hpp"

#include "ecg/core/error.hpp"

namespace ecg::sim {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace

Timestamp SynthSpec::default_recorded_at() { return parse_rfc3339("2024-03-01T12:00:00.000Z"); }

int native_rate_hz(DeviceKind device) noexcept {
  switch (device) {
    case DeviceKind::AppleWatch:
      return 500;
    case DeviceKind::Kardia:
      return 100;
    case DeviceKind::Fitbit:
      return 250;
  }
  return 0;
}

int SynthSpec::effective_rate_hz() const noexcept {
  return rate_hz > 0 ? rate_hz : native_rate_hz(device);
}

std::vector<std::int32_t> synthesize(const SynthSpec& spec) {
  const int rate = spec.effective_rate_hz();
  if (rate <= 0 || !(spec.duration_s > 0.0)) {
    throw Error(ErrorCode::BadRequest, "synthetic spec needs a positive rate and duration");
  }
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * rate));
  std::vector<std::int32_t> out(n, 0);
  if (spec.flat) return out;

  Rng rng(spec.seed);
  const double two_pi = 2.0 * std::numbers::pi;
  const double f0 = spec.heart_rate_bpm / 60.0;
  const double phase = two_pi * rng.unit();
  const double wander_phase = two_pi * rng.unit();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    // Fundamental plus a sharper third harmonic gives a beat-like shape.
    double v = spec.amplitude_uv * (std::sin(two_pi * f0 * t + phase) +
                                    0.35 * std::sin(3.0 * (two_pi * f0 * t + phase)));
    v += spec.wander_uv * std::sin(two_pi * spec.wander_hz * t + wander_phase);
    v += spec.noise_uv * rng.normal();
    out[i] = static_cast<std::int32_t>(std::llround(v));
  }
  return out;
}

std::string watch_export_xml(int rate_hz, Timestamp recorded_at,
                             const std::vector<std::int32_t>& samples_uv) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<ecgExport rateHz=\"" + std::to_string(rate_hz) + "\" recordedAt=\"" +
         format_rfc3339(recorded_at) + "\" lead=\"I\">\n  <samples>";
  for (std::size_t i = 0; i < samples_uv.size(); ++i) {
    if (i != 0) out += (i % 25 == 0) ? "\n    " : " ";
    out += std::to_string(samples_uv[i]);
  }
  out += "</samples>\n</ecgExport>\n";
  return out;
}

std::string device_record_json(DeviceKind device, int rate_hz, Timestamp recorded_at,
                               const std::vector<std::int32_t>& samples_uv) {
  const nlohmann::json doc = {{"device", std::string(to_string(device))},
                              {"rate", rate_hz},
                              {"recordedAt", format_rfc3339(recorded_at)},
                              {"samples_uV", samples_uv}};
  return doc.dump();
}

std::string serialize(const SynthSpec& spec) {
  const auto samples = synthesize(spec);
  if (spec.device == DeviceKind::AppleWatch) {
    return watch_export_xml(spec.effective_rate_hz(), spec.recorded_at, samples);
  }
  return device_record_json(spec.device, spec.effective_rate_hz(), spec.recorded_at, samples);
}

namespace {

void check_watch_spec(const SynthSpec& spec) {
  if (spec.device != DeviceKind::AppleWatch || spec.effective_rate_hz() != 500 ||
      spec.duration_s != 30.0) {
    throw Error(ErrorCode::BadRequest, "watch exports are 30 s at 500 Hz");
  }
}

}  // namespace

std::filesystem::path emit_watch_export(const SynthSpec& spec, const std::filesystem::path& dir) {
  check_watch_spec(spec);
  std::filesystem::create_directories(dir);
  const auto path = dir / ("watch-" + std::to_string(spec.seed) + ".ecg.xml");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << serialize(spec);
    if (!out.flush()) throw Error(ErrorCode::IoError, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
  return path;
}

PostOutcome post_watch_export(const SynthSpec& spec, const std::string& base_url,
                              const std::string& external_id) {
  check_watch_spec(spec);
  httplib::Client client(base_url);
  client.set_connection_timeout(5);
  const httplib::Headers headers = {{"X-Device-Kind", "apple_watch"},
                                    {"X-External-Id", external_id}};
  const auto res = client.Post("/v1/recordings", headers, serialize(spec), "application/xml");
  if (!res) {
    throw Error(ErrorCode::IoError,
                "cannot reach " + base_url + ": " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

}  // namespace ecg::sim

#include "ecg/dsp/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecg/core/error.hpp"

namespace ecg::dsp {

WindowPolicy parse_window_policy(std::string_view text) {
  if (text == "central") return WindowPolicy::Central;
  if (text == "first") return WindowPolicy::First;
  throw Error(ErrorCode::BadRequest, "unknown window policy '" + std::string(text) + "'");
}

std::vector<double> resample_linear(std::span<const double> x, int src_hz, int dst_hz) {
  if (x.size() < 2) {
    throw Error(ErrorCode::TooShort, "resampling needs at least 2 samples");
  }
  if (src_hz <= 0 || dst_hz <= 0) {
    throw Error(ErrorCode::BadRequest, "sample rates must be positive");
  }
  if (src_hz == dst_hz) return {x.begin(), x.end()};

  const auto n = static_cast<std::uint64_t>(x.size());
  const auto src = static_cast<std::uint64_t>(src_hz);
  const auto dst = static_cast<std::uint64_t>(dst_hz);
  const std::uint64_t out_len = (2 * n * dst + src) / (2 * src);

  std::vector<double> out(out_len);
  for (std::uint64_t k = 0; k < out_len; ++k) {
    // Position k * src / dst kept as an exact rational.
    const std::uint64_t num = k * src;
    const std::uint64_t i = num / dst;
    if (i >= n - 1) {
      out[k] = x[n - 1];
      continue;
    }
    const double frac = static_cast<double>(num % dst) / static_cast<double>(dst);
    const double a = x[i];
    const double b = x[i + 1];
    const double v = a + frac * (b - a);
    out[k] = std::clamp(v, std::min(a, b), std::max(a, b));
  }
  return out;
}

std::size_t baseline_window_samples(double seconds, int rate_hz, std::size_t max_samples) {
  const double target = seconds * rate_hz;
  auto w = static_cast<std::size_t>(2.0 * std::floor(target / 2.0) + 1.0);
  if (target < 1.0) w = 1;
  if (w > max_samples) w = max_samples % 2 == 1 ? max_samples : max_samples - 1;
  return w;
}

std::vector<double> remove_baseline(std::span<const double> x, std::size_t window) {
  if (window == 0 || window % 2 == 0 || window > x.size()) {
    throw Error(ErrorCode::BadWindow,
                "median window must be odd and at most the signal length (got " +
                    std::to_string(window) + " for " + std::to_string(x.size()) +
                    " samples)");
  }
  const std::size_t half = window / 2;
  const std::size_t n = x.size();
  std::vector<double> out(n);
  std::vector<double> buf;
  buf.reserve(window);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo),
               x.begin() + static_cast<std::ptrdiff_t>(hi));
    const std::size_t m = buf.size();
    auto mid = buf.begin() + static_cast<std::ptrdiff_t>(m / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    double median = *mid;
    if (m % 2 == 0) {
      const double lower = *std::max_element(buf.begin(), mid);
      median = 0.5 * (lower + median);
    }
    out[i] = x[i] - median;
  }
  return out;
}

Window extract_window(std::span<const double> x, WindowPolicy policy) {
  constexpr std::size_t len = NormalizedWindow::kLength;
  if (x.size() < len) {
    throw Error(ErrorCode::TooShort, "need " + std::to_string(len) +
                                         " samples at 500 Hz, got " +
                                         std::to_string(x.size()));
  }
  const std::size_t start = policy == WindowPolicy::Central ? (x.size() - len) / 2 : 0;
  Window w;
  w.values.assign(x.begin() + static_cast<std::ptrdiff_t>(start),
                  x.begin() + static_cast<std::ptrdiff_t>(start + len));
  w.start_index = start;
  w.start_s = static_cast<double>(start) / NormalizedWindow::kRateHz;
  return w;
}

std::vector<double> zscore(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::TooShort, "cannot standardize an empty window");
  double mean = 0.0;
  for (double s : v) mean += s;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double s : v) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  if (!(sd >= 1e-12)) {
    throw Error(ErrorCode::FlatSignal, "window has no variance (lead off?)");
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
  return out;
}

NormalizedWindow standardize(Window window, const RecordingId& source) {
  if (window.values.size() != NormalizedWindow::kLength) {
    throw Error(ErrorCode::BadRequest, "standardize expects a 5000-sample window");
  }
  return NormalizedWindow(zscore(window.values), source, window.start_s);
}

NormalizedWindow preprocess(const EcgRecording& rec, const DspConfig& config) {
  try {
    const auto samples = rec.samples();
    const auto w = baseline_window_samples(config.baseline_window_s,
                                           rec.sample_rate_hz(), samples.size());
    const auto detrended = remove_baseline(samples, w);
    const auto at500 =
        resample_linear(detrended, rec.sample_rate_hz(), NormalizedWindow::kRateHz);
    return standardize(extract_window(at500, config.window_policy), rec.recording_id());
  } catch (const Error& e) {
    throw Error(e.code(),
                e.message() + " (recording " + rec.recording_id().str() + ")",
                rec.recording_id().str());
  }
}

}  // namespace ecg::dsp

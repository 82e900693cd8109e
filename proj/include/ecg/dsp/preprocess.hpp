#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecg/core/types.hpp"

namespace ecg::dsp {

enum class WindowPolicy { Central, First };

WindowPolicy parse_window_policy(std::string_view text);

struct DspConfig {
  double baseline_window_s = 0.6;
  WindowPolicy window_policy = WindowPolicy::Central;
};

// Linear interpolation onto a dst_hz grid. Output length is
// round(n * dst_hz / src_hz); positions past the last input sample clamp to
// it. Identity (bit-exact copy) when the rates agree. Throws TooShort for
// fewer than 2 samples.
std::vector<double> resample_linear(std::span<const double> samples, int src_hz,
                                    int dst_hz);

// Subtracts the running median over an odd, centered, edge-truncated window.
// Throws BadWindow for even, zero, or oversized windows.
std::vector<double> remove_baseline(std::span<const double> samples,
                                    std::size_t window_samples);

// Odd sample count nearest to seconds * rate_hz (ties at even counts round
// up), clamped to the largest odd value <= max_samples.
std::size_t baseline_window_samples(double seconds, int rate_hz,
                                    std::size_t max_samples);

struct Window {
  std::vector<double> values;
  std::size_t start_index = 0;
  double start_s = 0.0;
};

// 10 s slice of a 500 Hz signal. Throws TooShort below 5000 samples.
Window extract_window(std::span<const double> samples_500hz, WindowPolicy policy);

// Z-scores with the population standard deviation. Throws FlatSignal when the
// deviation is below 1e-12.
std::vector<double> zscore(std::span<const double> values);

NormalizedWindow standardize(Window window, const RecordingId& source);

// remove_baseline -> resample_linear(500 Hz) -> extract_window -> standardize.
// Errors carry the recording id as their subject.
NormalizedWindow preprocess(const EcgRecording& recording, const DspConfig& config = {});

}  // namespace ecg::dsp

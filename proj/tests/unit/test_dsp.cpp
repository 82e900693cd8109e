#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"

#include "ecg/core/error.hpp"
#include "ecg/device/adapters.hpp"
#include "ecg/dsp/preprocess.hpp"
#include "testutil.hpp"

using namespace ecg;
using namespace ecg::dsp;
using ecg::testing::data_dir;
using ecg::testing::golden;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ecg::Error");
  return ErrorCode::IoError;
}

std::vector<double> read_oracle(const std::string& name) {
  std::ifstream in(data_dir() / "oracle" / (name + ".window"));
  REQUIRE(in);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  return v;
}

std::pair<double, double> mean_sd(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / v.size())};
}

const RecordingId kSource = RecordingId::of_bytes("dsp-test");

}  // namespace

TEST_CASE("resample_linear hand-computed cases") {
  const std::vector<double> in{1, 2, 3};
  CHECK(resample_linear(in, 1, 2) == std::vector<double>{1, 1.5, 2, 2.5, 3, 3});

  const std::vector<double> constant{5, 5, 5, 5};
  const auto up = resample_linear(constant, 100, 500);
  CHECK(up.size() == 20);
  CHECK(std::all_of(up.begin(), up.end(), [](double x) { return x == 5.0; }));

  CHECK(resample_linear(std::vector<double>(3000, 0.1), 100, 500).size() == 15000);
  CHECK(resample_linear(std::vector<double>(7500, 0.1), 250, 500).size() == 15000);
  CHECK(code_of([] { resample_linear(std::vector<double>{1.0}, 100, 500); }) ==
        ErrorCode::TooShort);
}

TEST_CASE("resample_linear is the identity for equal rates") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> x(777);
  for (auto& v : x) v = n(rng);
  CHECK(resample_linear(x, 500, 500) == x);
}

TEST_CASE("resample_linear stays inside the input range") {
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_int_distribution<int> len(2, 300);
  const int rates[] = {100, 250, 300, 500};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(len(rng));
    for (auto& v : x) v = u(rng);
    const int src = rates[trial % 4];
    const int dst = rates[(trial / 4) % 4];
    const auto y = resample_linear(x, src, dst);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const bool inside = std::all_of(y.begin(), y.end(),
                                    [&](double v) { return v >= *lo && v <= *hi; });
    CHECK(inside);
    CHECK(y.size() == static_cast<std::size_t>(std::llround(
                          static_cast<double>(x.size()) * dst / src)));
  }
}

TEST_CASE("remove_baseline hand-computed cases") {
  CHECK(remove_baseline(std::vector<double>{0, 1, 2, 3, 4}, 3) ==
        std::vector<double>{-0.5, 0, 0, 0, 0.5});
  CHECK(remove_baseline(std::vector<double>{0, 0, 10, 0, 0}, 3) ==
        std::vector<double>{0, 0, 10, 0, 0});
  const auto flat = remove_baseline(std::vector<double>(50, 3.25), 7);
  CHECK(std::all_of(flat.begin(), flat.end(), [](double x) { return x == 0.0; }));

  const std::vector<double> x{1, 2, 3, 4};
  CHECK(code_of([&] { remove_baseline(x, 2); }) == ErrorCode::BadWindow);
  CHECK(code_of([&] { remove_baseline(x, 0); }) == ErrorCode::BadWindow);
  CHECK(code_of([&] { remove_baseline(x, 5); }) == ErrorCode::BadWindow);
  CHECK(remove_baseline(std::vector<double>{1, 2, 3}, 3).size() == 3);
}

TEST_CASE("remove_baseline is idempotent on constant-baseline signals") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> x(400);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 + (i % 40 == 0 ? 5.0 : 0.0);
  const auto once = remove_baseline(x, 31);
  const auto twice = remove_baseline(once, 31);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(once[i] - twice[i]) < 1e-12);
}

TEST_CASE("baseline window length per device rate") {
  CHECK(baseline_window_samples(0.6, 100, 3000) == 61);
  CHECK(baseline_window_samples(0.6, 250, 7500) == 151);
  CHECK(baseline_window_samples(0.6, 500, 15000) == 301);
  CHECK(baseline_window_samples(0.6, 500, 100) == 99);
  CHECK(baseline_window_samples(0.6, 500, 100) % 2 == 1);
}

TEST_CASE("extract_window policies") {
  std::vector<double> x(15000);
  std::iota(x.begin(), x.end(), 0.0);
  const auto c = extract_window(x, WindowPolicy::Central);
  CHECK(c.start_index == 5000);
  CHECK(c.start_s == 10.0);
  CHECK(c.values.size() == 5000);
  CHECK(c.values.front() == 5000.0);
  CHECK(c.values.back() == 9999.0);

  const auto f = extract_window(x, WindowPolicy::First);
  CHECK(f.start_index == 0);
  CHECK(f.values.back() == 4999.0);

  const std::vector<double> exact(x.begin(), x.begin() + 5000);
  const auto whole = extract_window(exact, WindowPolicy::Central);
  CHECK(whole.start_s == 0.0);
  CHECK(whole.values == exact);

  const std::vector<double> odd(x.begin(), x.begin() + 5001);
  CHECK(extract_window(odd, WindowPolicy::Central).start_index == 0);

  const std::vector<double> shorter(x.begin(), x.begin() + 4999);
  CHECK(code_of([&] { extract_window(shorter, WindowPolicy::Central); }) ==
        ErrorCode::TooShort);

  CHECK(parse_window_policy("central") == WindowPolicy::Central);
  CHECK(parse_window_policy("first") == WindowPolicy::First);
  CHECK(code_of([] { parse_window_policy("last"); }) == ErrorCode::BadRequest);
}

TEST_CASE("zscore and standardize") {
  const auto z = zscore(std::vector<double>{1, 2, 3});
  CHECK(z[0] == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(z[1] == doctest::Approx(0.0));
  CHECK(z[2] == doctest::Approx(1.224745).epsilon(1e-6));
  CHECK(code_of([] { zscore(std::vector<double>(5000, 0.0)); }) == ErrorCode::FlatSignal);
  CHECK(code_of([] { zscore(std::vector<double>(5000, 7.5)); }) == ErrorCode::FlatSignal);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(4, 2);
  Window w;
  w.values.resize(5000);
  for (auto& v : w.values) v = n(rng);
  w.start_s = 1.5;
  const auto once = standardize(w, kSource);
  CHECK(once.window_start_s() == 1.5);
  CHECK(once.source_recording_id() == kSource);
  Window again{{once.values().begin(), once.values().end()}, 0, 1.5};
  const auto twice = standardize(again, kSource);
  for (std::size_t i = 0; i < 5000; ++i) {
    CHECK(std::abs(once.values()[i] - twice.values()[i]) < 1e-9);
  }
}

TEST_CASE("preprocess matches the scripted oracle on every golden") {
  for (const char* name : {"kardia", "watch", "fitbit"}) {
    const char* file = std::string(name) == "watch" ? "watch.ecg.xml"
                       : std::string(name) == "kardia" ? "kardia.json"
                                                       : "fitbit.json";
    CAPTURE(name);
    const auto rec = device::parse_any(golden(file));
    const auto win = preprocess(rec);
    const auto oracle = read_oracle(name);
    REQUIRE(oracle.size() == 5000);
    REQUIRE(win.values().size() == 5000);
    double worst = 0;
    for (std::size_t i = 0; i < 5000; ++i) {
      worst = std::max(worst, std::abs(win.values()[i] - oracle[i]));
    }
    CHECK(worst < 1e-9);
    CHECK(win.window_start_s() == 10.0);
    CHECK(win.source_recording_id() == rec.recording_id());
    const auto [mean, sd] = mean_sd(win.values());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(sd - 1.0) < 1e-6);

    const auto again = preprocess(rec);
    CHECK(std::equal(win.values().begin(), win.values().end(), again.values().begin()));
  }
}

TEST_CASE("preprocess on a 10 Hz sine correlates with the analytic resample") {
  std::vector<double> mv(3000);
  for (std::size_t i = 0; i < mv.size(); ++i) {
    mv[i] = std::sin(2 * M_PI * 10.0 * i / 100.0);
  }
  EcgRecording::Fields f;
  f.recording_id = RecordingId::of_bytes("sine");
  f.sample_rate_hz = 100;
  f.samples_mv = mv;
  const EcgRecording rec(std::move(f));
  const auto win = preprocess(rec);
  std::vector<double> ref(5000);
  for (std::size_t k = 0; k < ref.size(); ++k) {
    ref[k] = std::sin(2 * M_PI * 10.0 * (5000 + k) / 500.0);
  }
  const auto z = zscore(ref);
  double dot = 0;
  for (std::size_t k = 0; k < 5000; ++k) dot += z[k] * win.values()[k];
  CHECK(dot / 5000.0 > 0.999);
}

TEST_CASE("preprocess rejections carry the recording id") {
  const auto rec = device::parse_any(golden("kardia-flat.json"));
  try {
    preprocess(rec);
    FAIL("flat signal accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FlatSignal);
    CHECK(e.subject() == rec.recording_id().str());
  }
}

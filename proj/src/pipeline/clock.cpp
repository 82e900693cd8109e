#include "ecg/pipeline/clock.hpp"

#include <chrono>

namespace ecg::pipeline {

Timestamp SystemClock::now() const {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(
      std::chrono::system_clock::now());
}

bool SystemClock::sleep_until(Timestamp t, std::stop_token stop) {
  std::unique_lock lock(mu_);
  cv_.wait_until(lock, stop, t, [] { return false; });
  return !stop.stop_requested();
}

SimulatedClock::SimulatedClock(Timestamp start) : now_(start) {}

Timestamp SimulatedClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

bool SimulatedClock::sleep_until(Timestamp t, std::stop_token stop) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, stop, [&] { return now_ >= t; });
  return !stop.stop_requested();
}

void SimulatedClock::set(Timestamp t) {
  {
    std::lock_guard lock(mu_);
    if (t > now_) now_ = t;
  }
  cv_.notify_all();
}

void SimulatedClock::advance(double seconds) { set(add_seconds(now(), seconds)); }

}  // namespace ecg::pipeline

#pragma once

#include <condition_variable>
#include <mutex>
#include <stop_token>

#include "ecg/core/time.hpp"

namespace ecg::pipeline {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
  // Blocks until now() >= t. Returns false if `stop` was requested first.
  virtual bool sleep_until(Timestamp t, std::stop_token stop) = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
  bool sleep_until(Timestamp t, std::stop_token stop) override;

 private:
  std::mutex mu_;
  std::condition_variable_any cv_;
};

// Manually driven clock. Time only moves through set()/advance(); sleepers
// wake when it passes their deadline.
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(Timestamp start = Timestamp{});

  Timestamp now() const override;
  bool sleep_until(Timestamp t, std::stop_token stop) override;

  void set(Timestamp t);
  void advance(double seconds);

 private:
  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  Timestamp now_;
};

}  // namespace ecg::pipeline

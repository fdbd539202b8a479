#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <stop_token>

namespace sonogrid::node {

/// Wall clock in ms since the Unix epoch, with a stop-aware sleep. Node
/// loops only ever read time and sleep through this interface.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
  /// Returns false if `stop` was requested before the deadline.
  virtual bool sleep_until(std::int64_t deadline_ms, std::stop_token stop) = 0;
};

class SystemClock final : public Clock {
 public:
  std::int64_t now_ms() override;
  bool sleep_until(std::int64_t deadline_ms, std::stop_token stop) override;

 private:
  std::mutex mutex_;
  std::condition_variable_any cv_;
};

/// Manual clock for deterministic tests; sleeping jumps straight to the deadline.
class FakeClock final : public Clock {
 public:
  explicit FakeClock(std::int64_t start_ms = 0) : now_(start_ms) {}

  std::int64_t now_ms() override;
  bool sleep_until(std::int64_t deadline_ms, std::stop_token stop) override;
  void advance(std::int64_t ms);

 private:
  std::mutex mutex_;
  std::int64_t now_;
};

}  // namespace sonogrid::node

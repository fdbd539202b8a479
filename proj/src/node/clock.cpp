#include "sonogrid/node/clock.hpp"

#include <algorithm>
#include <chrono>

namespace sonogrid::node {

std::int64_t SystemClock::now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool SystemClock::sleep_until(std::int64_t deadline_ms, std::stop_token stop) {
  const auto deadline = std::chrono::system_clock::time_point(std::chrono::milliseconds(deadline_ms));
  std::unique_lock lock(mutex_);
  cv_.wait_until(lock, stop, deadline, [] { return false; });
  return !stop.stop_requested();
}

std::int64_t FakeClock::now_ms() {
  std::lock_guard lock(mutex_);
  return now_;
}

bool FakeClock::sleep_until(std::int64_t deadline_ms, std::stop_token stop) {
  if (stop.stop_requested()) return false;
  std::lock_guard lock(mutex_);
  now_ = std::max(now_, deadline_ms);
  return true;
}

void FakeClock::advance(std::int64_t ms) {
  std::lock_guard lock(mutex_);
  now_ += ms;
}

}  // namespace sonogrid::node

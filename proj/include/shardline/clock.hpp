#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>

namespace shardline {

// Milliseconds since the Unix epoch. All timestamps in the system use this.
using Millis = std::int64_t;

class Clock {
public:
  virtual ~Clock() = default;
  virtual Millis now_ms() const = 0;
};

class SystemClock final : public Clock {
public:
  Millis now_ms() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
  static std::shared_ptr<Clock> shared() {
    static auto instance = std::make_shared<SystemClock>();
    return instance;
  }
};

// Hand-advanced clock for TTL tests.
class ManualClock final : public Clock {
public:
  explicit ManualClock(Millis start = 0) : now_(start) {}
  Millis now_ms() const override { return now_.load(std::memory_order_relaxed); }
  void advance_ms(Millis delta) { now_.fetch_add(delta, std::memory_order_relaxed); }
  void advance_seconds(std::int64_t s) { advance_ms(s * 1000); }
  void set_ms(Millis t) { now_.store(t, std::memory_order_relaxed); }

private:
  std::atomic<Millis> now_;
};

inline Millis system_now_ms() { return SystemClock().now_ms(); }

// Monotonic clock for latency measurement, independent of wall time.
inline double steady_now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace shardline

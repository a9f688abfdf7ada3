#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>

#include "shardline/clock.hpp"
#include "shardline/domain.hpp"

namespace shardline {

// TTL cache for what-if prediction results. The clock is injected so expiry
// tests can run instantly. Concurrent misses on one key run the compute
// function exactly once (single-flight); when full, the entry nearest expiry
// is evicted.
class TtlCache {
public:
  TtlCache(std::shared_ptr<Clock> clock, std::int64_t max_entries = 100000,
           Millis default_ttl_ms = 3600LL * 1000);

  struct Result {
    PredictionRecord value;
    bool hit = false;
  };

  // `input_json` is canonicalized, so key order and whitespace do not split
  // the cache. compute failures propagate and cache nothing.
  Result get_or_compute(UserId user_id, const std::string& input_json,
                        const std::function<PredictionRecord()>& compute,
                        std::optional<Millis> ttl_ms = std::nullopt);

  // Removes every entry belonging to the user; returns how many.
  std::int64_t invalidate(UserId user_id);

  struct Stats {
    std::int64_t hits = 0;
    std::int64_t misses = 0;
    std::int64_t evictions = 0;
    std::int64_t entries = 0;
  };
  Stats stats() const;

  // "u<user_id>:<fnv1a64 of canonical input>"; exposed for tests.
  static std::string make_key(UserId user_id, const std::string& input_json);

private:
  struct Entry {
    PredictionRecord value;
    UserId user_id = 0;
    Millis expires_at = 0;
  };
  // One per key being computed; followers wait for the leader's outcome so a
  // failing compute is also run just once per concurrent batch.
  struct Flight {
    bool done = false;
    std::optional<PredictionRecord> value;
    std::exception_ptr error;
  };

  void insert_locked(const std::string& key, UserId user_id, const PredictionRecord& value,
                     Millis expires_at);
  void erase_entry_locked(const std::string& key);
  void evict_to_fit_locked(Millis now);

  const std::shared_ptr<Clock> clock_;
  const std::int64_t max_entries_;
  const Millis default_ttl_ms_;

  mutable std::mutex mu_;
  std::condition_variable flight_cv_;
  std::unordered_map<std::string, Entry> entries_;
  std::set<std::pair<Millis, std::string>> by_expiry_;
  std::unordered_map<UserId, std::set<std::string>> by_user_;
  std::unordered_map<std::string, std::shared_ptr<Flight>> in_flight_;
  std::int64_t hits_ = 0;
  std::int64_t misses_ = 0;
  std::int64_t evictions_ = 0;
};

}  // namespace shardline

#include "shardline/cache.hpp"

#include "shardline/ids.hpp"
#include "shardline/json_util.hpp"

namespace shardline {

TtlCache::TtlCache(std::shared_ptr<Clock> clock, std::int64_t max_entries,
                   Millis default_ttl_ms)
    : clock_(std::move(clock)), max_entries_(max_entries), default_ttl_ms_(default_ttl_ms) {}

std::string TtlCache::make_key(UserId user_id, const std::string& input_json) {
  return "u" + std::to_string(user_id) + ":" + to_hex(fnv1a64(canonical_json(input_json)));
}

void TtlCache::insert_locked(const std::string& key, UserId user_id,
                             const PredictionRecord& value, Millis expires_at) {
  erase_entry_locked(key);
  entries_[key] = Entry{value, user_id, expires_at};
  by_expiry_.insert({expires_at, key});
  by_user_[user_id].insert(key);
}

void TtlCache::erase_entry_locked(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  by_expiry_.erase({it->second.expires_at, key});
  auto uit = by_user_.find(it->second.user_id);
  if (uit != by_user_.end()) {
    uit->second.erase(key);
    if (uit->second.empty()) by_user_.erase(uit);
  }
  entries_.erase(it);
}

void TtlCache::evict_to_fit_locked(Millis now) {
  // Expired entries go first; then live ones nearest expiry.
  while (static_cast<std::int64_t>(entries_.size()) >= max_entries_ && !by_expiry_.empty()) {
    auto first = *by_expiry_.begin();
    erase_entry_locked(first.second);
    if (first.first > now) ++evictions_;  // evicting a live entry
  }
}

TtlCache::Result TtlCache::get_or_compute(UserId user_id, const std::string& input_json,
                                          const std::function<PredictionRecord()>& compute,
                                          std::optional<Millis> ttl_ms) {
  const std::string key = make_key(user_id, input_json);
  const Millis ttl = ttl_ms.value_or(default_ttl_ms_);

  std::shared_ptr<Flight> flight;
  {
    std::unique_lock<std::mutex> lock(mu_);
    for (;;) {
      const Millis now = clock_->now_ms();
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        if (now < it->second.expires_at) {
          ++hits_;
          return {it->second.value, true};
        }
        erase_entry_locked(key);  // expired; fall through to compute
      }
      auto fit = in_flight_.find(key);
      if (fit == in_flight_.end()) break;
      auto follower_of = fit->second;
      flight_cv_.wait(lock, [&] { return follower_of->done; });
      if (follower_of->error) std::rethrow_exception(follower_of->error);
      ++misses_;  // shared result, but this caller did miss
      return {*follower_of->value, false};
    }
    ++misses_;
    flight = std::make_shared<Flight>();
    in_flight_[key] = flight;
  }

  PredictionRecord value;
  try {
    value = compute();
  } catch (...) {
    std::lock_guard<std::mutex> lock(mu_);
    flight->error = std::current_exception();
    flight->done = true;
    in_flight_.erase(key);
    flight_cv_.notify_all();
    throw;
  }

  std::lock_guard<std::mutex> lock(mu_);
  const Millis now = clock_->now_ms();
  evict_to_fit_locked(now);
  insert_locked(key, user_id, value, now + ttl);
  flight->value = value;
  flight->done = true;
  in_flight_.erase(key);
  flight_cv_.notify_all();
  return {value, false};
}

std::int64_t TtlCache::invalidate(UserId user_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto uit = by_user_.find(user_id);
  if (uit == by_user_.end()) return 0;
  std::vector<std::string> keys(uit->second.begin(), uit->second.end());
  for (const auto& k : keys) erase_entry_locked(k);
  return static_cast<std::int64_t>(keys.size());
}

TtlCache::Stats TtlCache::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  Stats s;
  s.hits = hits_;
  s.misses = misses_;
  s.evictions = evictions_;
  s.entries = static_cast<std::int64_t>(entries_.size());
  return s;
}

}  // namespace shardline

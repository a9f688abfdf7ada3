#include "shardline/shard_router.hpp"

#include <stdexcept>

#include "shardline/errors.hpp"

namespace shardline {

ShardMap::ShardMap(std::vector<ShardRange> entries, std::int64_t capacity_per_shard)
    : entries_(std::move(entries)), capacity_(capacity_per_shard) {
  if (capacity_ < 1) throw std::invalid_argument("capacity_per_shard must be >= 1");
  if (entries_.empty()) throw std::invalid_argument("shard map needs at least one range");
  UserId expect_lo = 1;
  for (const auto& e : entries_) {
    if (e.lo != expect_lo)
      throw std::invalid_argument("shard ranges must be contiguous from 1");
    if (e.hi - e.lo + 1 != capacity_)
      throw std::invalid_argument("every range must span capacity_per_shard ids");
    expect_lo = e.hi + 1;
  }
}

ShardMap ShardMap::uniform(int shards, std::int64_t capacity_per_shard) {
  if (shards < 1) throw std::invalid_argument("need at least one shard");
  std::vector<ShardRange> entries;
  entries.reserve(static_cast<std::size_t>(shards));
  UserId lo = 1;
  for (int i = 0; i < shards; ++i) {
    entries.push_back({lo, lo + capacity_per_shard - 1, i});
    lo += capacity_per_shard;
  }
  return ShardMap(std::move(entries), capacity_per_shard);
}

std::optional<int> ShardMap::try_route(UserId user_id) const {
  if (user_id < 1 || user_id > entries_.back().hi) return std::nullopt;
  // Ranges are contiguous with equal span, so routing is direct arithmetic.
  auto idx = static_cast<std::size_t>((user_id - 1) / capacity_);
  return entries_[idx].shard_index;
}

int ShardMap::route(UserId user_id) const {
  auto shard = try_route(user_id);
  if (!shard) {
    throw UnmappedIdError("user_id " + std::to_string(user_id) +
                          " is outside every mapped range");
  }
  return *shard;
}

ShardMap ShardMap::extend() const {
  auto entries = entries_;
  const auto& last = entries.back();
  entries.push_back({last.hi + 1, last.hi + capacity_, last.shard_index + 1});
  return ShardMap(std::move(entries), capacity_);
}

ShardDirectory::ShardDirectory(ShardMap initial, bool auto_extend)
    : map_(std::move(initial)), auto_extend_(auto_extend) {}

int ShardDirectory::route(UserId user_id) {
  if (user_id < 1) {
    throw UnmappedIdError("user_id must be >= 1, got " + std::to_string(user_id));
  }
  std::lock_guard lock(mutex_);
  for (;;) {
    if (auto shard = map_.try_route(user_id)) return *shard;
    if (!auto_extend_) {
      throw UnmappedIdError("user_id " + std::to_string(user_id) +
                            " is outside every mapped range");
    }
    map_ = map_.extend();
  }
}

ShardMap ShardDirectory::snapshot() const {
  std::lock_guard lock(mutex_);
  return map_;
}

void to_json(Json& j, const ShardRange& r) {
  j = Json{{"lo", r.lo}, {"hi", r.hi}, {"shard", r.shard_index}};
}

void from_json(const Json& j, ShardRange& r) {
  j.at("lo").get_to(r.lo);
  j.at("hi").get_to(r.hi);
  j.at("shard").get_to(r.shard_index);
}

}  // namespace shardline

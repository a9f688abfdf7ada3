#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "shardline/domain.hpp"

namespace shardline {

struct ShardRange {
  UserId lo = 0;
  UserId hi = 0;
  int shard_index = 0;

  bool operator==(const ShardRange&) const = default;
};

// Ordered, disjoint, contiguous ranges starting at user id 1, each spanning
// exactly capacity_per_shard ids. Immutable once constructed; extend()
// returns a new map.
class ShardMap {
public:
  ShardMap(std::vector<ShardRange> entries, std::int64_t capacity_per_shard);

  // n shards of the given capacity starting at id 1.
  static ShardMap uniform(int shards, std::int64_t capacity_per_shard);

  // Shard owning user_id, or nullopt when the id lies past the last range.
  std::optional<int> try_route(UserId user_id) const;

  // Same, but throws UnmappedIdError instead of returning nullopt.
  int route(UserId user_id) const;

  ShardMap extend() const;

  const std::vector<ShardRange>& entries() const { return entries_; }
  std::int64_t capacity_per_shard() const { return capacity_; }
  int shard_count() const { return static_cast<int>(entries_.size()); }
  UserId max_mapped_id() const { return entries_.back().hi; }

  bool operator==(const ShardMap&) const = default;

private:
  std::vector<ShardRange> entries_;
  std::int64_t capacity_;
};

// Holds the installed ShardMap and applies auto-extension atomically. route()
// never changes the shard of an already-mapped id.
class ShardDirectory {
public:
  ShardDirectory(ShardMap initial, bool auto_extend);

  // Routes the id, extending the map as needed when auto-extend is on.
  // Throws UnmappedIdError when the id is unmapped and auto-extend is off.
  int route(UserId user_id);

  ShardMap snapshot() const;
  bool auto_extend() const { return auto_extend_; }

private:
  mutable std::mutex mutex_;
  ShardMap map_;
  bool auto_extend_;
};

void to_json(Json& j, const ShardRange& r);
void from_json(const Json& j, ShardRange& r);

}  // namespace shardline

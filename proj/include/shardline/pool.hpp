#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>

#include "shardline/clock.hpp"

namespace shardline {

// Bounded admission gate in front of each shard store, in the style of a
// lightweight connection pooler. Waiters are granted leases strictly in FIFO
// order; acquire blocks up to acquire_timeout_ms and then fails.
//
// The same primitive bounds concurrent inferences in the prediction service.
class ConnectionPool {
public:
  ConnectionPool(int max_connections, Millis acquire_timeout_ms);

  class Lease {
  public:
    Lease() = default;
    Lease(Lease&& other) noexcept : pool_(other.pool_) { other.pool_ = nullptr; }
    Lease& operator=(Lease&& other) noexcept;
    ~Lease() { release(); }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    void release();
    bool held() const { return pool_ != nullptr; }

  private:
    friend class ConnectionPool;
    explicit Lease(ConnectionPool* pool) : pool_(pool) {}
    ConnectionPool* pool_ = nullptr;
  };

  // Throws PoolTimeoutError after acquire_timeout_ms, PoolClosedError when
  // the pool is shutting down.
  Lease acquire();

  // Like acquire() but with a caller-chosen timeout.
  Lease acquire_for(Millis timeout_ms);

  void close();

  int max_connections() const { return max_; }
  int in_use() const;
  int high_water() const;
  std::int64_t timeouts() const;
  Millis acquire_timeout_ms() const { return timeout_ms_; }

private:
  void release_one();

  const int max_;
  const Millis timeout_ms_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::uint64_t> waiters_;
  std::uint64_t next_ticket_ = 0;
  int in_use_ = 0;
  int high_water_ = 0;
  std::int64_t timeouts_ = 0;
  bool closed_ = false;
};

}  // namespace shardline

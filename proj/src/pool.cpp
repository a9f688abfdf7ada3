#include "shardline/pool.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "shardline/errors.hpp"

namespace shardline {

ConnectionPool::ConnectionPool(int max_connections, Millis acquire_timeout_ms)
    : max_(max_connections), timeout_ms_(acquire_timeout_ms) {
  if (max_ < 1) throw std::invalid_argument("max_connections must be >= 1");
}

ConnectionPool::Lease& ConnectionPool::Lease::operator=(Lease&& other) noexcept {
  if (this != &other) {
    release();
    pool_ = other.pool_;
    other.pool_ = nullptr;
  }
  return *this;
}

void ConnectionPool::Lease::release() {
  if (pool_) {
    pool_->release_one();
    pool_ = nullptr;
  }
}

ConnectionPool::Lease ConnectionPool::acquire() { return acquire_for(timeout_ms_); }

ConnectionPool::Lease ConnectionPool::acquire_for(Millis timeout_ms) {
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  std::unique_lock lock(mutex_);
  const std::uint64_t ticket = next_ticket_++;
  waiters_.push_back(ticket);

  auto my_turn = [&] {
    return !waiters_.empty() && waiters_.front() == ticket && in_use_ < max_;
  };
  auto drop_ticket = [&] {
    waiters_.erase(std::find(waiters_.begin(), waiters_.end(), ticket));
  };

  for (;;) {
    if (closed_) {
      drop_ticket();
      cv_.notify_all();
      throw PoolClosedError("pool is closed");
    }
    if (my_turn()) {
      waiters_.pop_front();
      ++in_use_;
      high_water_ = std::max(high_water_, in_use_);
      cv_.notify_all();  // the new front waiter may also be eligible
      return Lease(this);
    }
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout && !my_turn()) {
      drop_ticket();
      ++timeouts_;
      cv_.notify_all();
      throw PoolTimeoutError("no lease available within " +
                             std::to_string(timeout_ms) + " ms");
    }
  }
}

void ConnectionPool::release_one() {
  std::lock_guard lock(mutex_);
  --in_use_;
  cv_.notify_all();
}

void ConnectionPool::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  cv_.notify_all();
}

int ConnectionPool::in_use() const {
  std::lock_guard lock(mutex_);
  return in_use_;
}

int ConnectionPool::high_water() const {
  std::lock_guard lock(mutex_);
  return high_water_;
}

std::int64_t ConnectionPool::timeouts() const {
  std::lock_guard lock(mutex_);
  return timeouts_;
}

}  // namespace shardline

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "shardline/clock.hpp"
#include "shardline/fslock.hpp"
#include "shardline/json_util.hpp"

namespace shardline {

inline constexpr const char* kRequestQueue = "ml.prediction.request";
inline constexpr const char* kResponseQueue = "ml.prediction.hybrid_response";
inline constexpr const char* kDeadLetterQueue = "ml.prediction.dlq";

struct Envelope {
  std::string correlation_id;
  std::string queue;
  Json payload;
  Millis enqueued_at = 0;
  int delivery_count = 0;  // redeliveries; 0 on first delivery

  bool operator==(const Envelope&) const = default;
};

struct QueueDepths {
  std::int64_t pending = 0;
  std::int64_t unacked = 0;
  std::int64_t acked = 0;
  std::int64_t dead = 0;       // dead-lettered out of this queue
  std::int64_t published = 0;
};

// Durable acknowledgement-based queue broker. Every state change is one
// JSON line appended to the queue's log under an exclusive flock, so queues
// survive restarts and may be shared by several processes at once; replaying
// a log is idempotent. Delivery is at-least-once: claimed envelopes that are
// neither acked nor nacked return to pending when their visibility deadline
// passes, and an envelope that reaches max_deliveries is moved to the
// dead-letter queue instead of being redelivered.
class Broker {
public:
  explicit Broker(std::filesystem::path dir,
                  std::shared_ptr<Clock> clock = SystemClock::shared(),
                  Millis visibility_ms = 30 * 1000, int max_deliveries = 5);

  void declare_queue(const std::string& name);
  bool is_declared(const std::string& name) const;

  // Persisted before return. UnknownQueue when not declared.
  void publish(const std::string& queue, const std::string& correlation_id,
               const Json& payload);

  // Claims the oldest pending envelope, if any, starting its visibility
  // window. Expired claims are requeued (or dead-lettered) first.
  std::optional<Envelope> try_claim(const std::string& queue);

  // True when the envelope was in flight and is now settled; a late ack or
  // nack after the deadline already requeued it returns false.
  bool ack(const std::string& queue, const std::string& correlation_id);
  bool nack(const std::string& queue, const std::string& correlation_id,
            bool requeue = true);

  QueueDepths depths(const std::string& queue);
  std::vector<std::string> queue_names() const;  // every queue on disk

  Millis visibility_ms() const { return visibility_ms_; }
  int max_deliveries() const { return max_deliveries_; }
  const std::filesystem::path& dir() const { return dir_; }

private:
  struct Item {
    Envelope env;
    std::uint64_t idx = 0;  // publish order
    int claims = 0;         // total deliveries so far
    Millis deadline = 0;
    enum class State { pending, unacked, gone } state = State::pending;
  };

  struct QueueState {
    explicit QueueState(const std::filesystem::path& dir, const std::string& name);
    std::string name;
    std::mutex mu;
    FileLock lock;
    AppendLog log;
    std::uint64_t offset = 0;
    std::uint64_t next_idx = 0;
    std::unordered_map<std::string, Item> items;
    std::set<std::pair<std::uint64_t, std::string>> pending;
    std::int64_t acked = 0;
    std::int64_t dead = 0;
    std::int64_t published = 0;

    void refresh();
    void apply(const Json& rec);
    void commit(const Json& rec);
  };

  QueueState& state(const std::string& queue);
  // Requeues or dead-letters every expired claim; caller holds q's mutex and
  // exclusive flock.
  void expire_locked(QueueState& q, Millis now);
  void dead_letter_locked(QueueState& q, const std::string& correlation_id);

  const std::filesystem::path dir_;
  std::shared_ptr<Clock> clock_;
  const Millis visibility_ms_;
  const int max_deliveries_;
  mutable std::mutex states_mu_;
  std::map<std::string, std::unique_ptr<QueueState>> states_;
};

// Polling consumer loop: claims, runs the handler, acks on return, nacks on
// throw. `threads` bounds concurrent handlers.
class Subscription {
public:
  Subscription(Broker& broker, std::string queue,
               std::function<void(const Envelope&)> handler, int threads = 1,
               Millis poll_ms = 25);
  ~Subscription();
  Subscription(const Subscription&) = delete;
  Subscription& operator=(const Subscription&) = delete;

  void stop();
  std::int64_t handled() const { return handled_.load(); }

private:
  void run();

  Broker& broker_;
  const std::string queue_;
  const std::function<void(const Envelope&)> handler_;
  const Millis poll_ms_;
  std::atomic<bool> stop_{false};
  std::atomic<std::int64_t> handled_{0};
  std::vector<std::thread> threads_;
};

}  // namespace shardline

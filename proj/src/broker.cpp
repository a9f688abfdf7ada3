#include "shardline/broker.hpp"

#include <algorithm>

#include "shardline/errors.hpp"

namespace shardline {

Broker::QueueState::QueueState(const std::filesystem::path& dir, const std::string& qname)
    : name(qname),
      lock(dir / (qname + ".lock")),
      log(dir / (qname + ".jsonl")) {}

void Broker::QueueState::refresh() {
  if (log.size() < offset) {  // rewritten externally; start over
    items.clear();
    pending.clear();
    acked = dead = published = 0;
    offset = 0;
    next_idx = 0;
  }
  log.read_new_lines(&offset, [this](const std::string& line) {
    if (line.empty()) return;
    Json rec = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded()) return;
    apply(rec);
  });
}

void Broker::QueueState::apply(const Json& rec) {
  const std::string op = rec.value("o", "");
  const std::string id = rec.value("id", "");
  if (id.empty()) return;
  auto it = items.find(id);
  if (op == "pub") {
    if (it != items.end()) {
      // Re-publishing a settled id makes it a fresh message; an id still in
      // flight or pending ignores the duplicate.
      if (it->second.state != Item::State::gone) return;
      pending.erase({it->second.idx, id});
      items.erase(it);
    }
    Item item;
    item.env.correlation_id = id;
    item.env.queue = name;
    item.env.payload = rec.value("payload", Json());
    item.env.enqueued_at = rec.value("at", 0LL);
    item.idx = next_idx++;
    items.emplace(id, item);
    pending.insert({item.idx, id});
    ++published;
  } else if (op == "claim") {
    if (it == items.end() || it->second.state != Item::State::pending) return;
    pending.erase({it->second.idx, id});
    it->second.state = Item::State::unacked;
    it->second.claims += 1;
    it->second.deadline = rec.value("dl", 0LL);
  } else if (op == "ack") {
    if (it == items.end() || it->second.state != Item::State::unacked) return;
    it->second.state = Item::State::gone;
    ++acked;
  } else if (op == "nack" || op == "exp") {
    if (it == items.end() || it->second.state != Item::State::unacked) return;
    it->second.state = Item::State::pending;
    pending.insert({it->second.idx, id});
  } else if (op == "dead") {
    if (it == items.end() || it->second.state == Item::State::gone) return;
    if (it->second.state == Item::State::pending) pending.erase({it->second.idx, id});
    it->second.state = Item::State::gone;
    ++dead;
  }
}

void Broker::QueueState::commit(const Json& rec) {
  log.append_line(rec.dump());
  // The record is applied directly, so move the replay cursor past it; the
  // exclusive queue lock guarantees nothing else appended since refresh().
  offset = log.size();
  apply(rec);
}

Broker::Broker(std::filesystem::path dir, std::shared_ptr<Clock> clock, Millis visibility_ms,
               int max_deliveries)
    : dir_(std::move(dir)),
      clock_(std::move(clock)),
      visibility_ms_(visibility_ms),
      max_deliveries_(max_deliveries) {
  std::filesystem::create_directories(dir_);
}

void Broker::declare_queue(const std::string& name) {
  std::lock_guard<std::mutex> g(states_mu_);
  auto& slot = states_[name];
  if (!slot) slot = std::make_unique<QueueState>(dir_, name);
}

bool Broker::is_declared(const std::string& name) const {
  std::lock_guard<std::mutex> g(states_mu_);
  return states_.count(name) > 0;
}

Broker::QueueState& Broker::state(const std::string& queue) {
  std::lock_guard<std::mutex> g(states_mu_);
  auto it = states_.find(queue);
  if (it == states_.end()) throw UnknownQueueError("queue not declared: " + queue);
  return *it->second;
}

void Broker::publish(const std::string& queue, const std::string& correlation_id,
                     const Json& payload) {
  auto& q = state(queue);
  std::lock_guard<std::mutex> g(q.mu);
  FileLock::Guard fg(q.lock, /*exclusive=*/true);
  q.refresh();
  q.commit({{"o", "pub"},
            {"id", correlation_id},
            {"payload", payload},
            {"at", clock_->now_ms()}});
}

void Broker::dead_letter_locked(QueueState& q, const std::string& correlation_id) {
  // The dead-letter copy is published first; if we crash in between, the
  // source entry expires again later and the duplicate publish is absorbed.
  auto it = q.items.find(correlation_id);
  if (it == q.items.end()) return;
  if (q.name != kDeadLetterQueue) {
    declare_queue(kDeadLetterQueue);
    auto& dlq = state(kDeadLetterQueue);
    std::lock_guard<std::mutex> g(dlq.mu);
    FileLock::Guard fg(dlq.lock, /*exclusive=*/true);
    dlq.refresh();
    // The payload crosses over intact; source queue and delivery count ride
    // along in the log record for operators (apply() ignores them).
    dlq.commit({{"o", "pub"},
                {"id", correlation_id},
                {"payload", it->second.env.payload},
                {"at", clock_->now_ms()},
                {"src", q.name},
                {"deliveries", it->second.claims}});
  }
  q.commit({{"o", "dead"}, {"id", correlation_id}});
}

void Broker::expire_locked(QueueState& q, Millis now) {
  std::vector<std::string> expired;
  for (const auto& [id, item] : q.items)
    if (item.state == Item::State::unacked && item.deadline <= now) expired.push_back(id);
  for (const auto& id : expired) {
    if (q.items.at(id).claims >= max_deliveries_)
      dead_letter_locked(q, id);
    else
      q.commit({{"o", "exp"}, {"id", id}});
  }
}

std::optional<Envelope> Broker::try_claim(const std::string& queue) {
  auto& q = state(queue);
  std::lock_guard<std::mutex> g(q.mu);
  FileLock::Guard fg(q.lock, /*exclusive=*/true);
  q.refresh();
  const Millis now = clock_->now_ms();
  expire_locked(q, now);
  if (q.pending.empty()) return std::nullopt;
  const std::string id = q.pending.begin()->second;
  q.commit({{"o", "claim"}, {"id", id}, {"dl", now + visibility_ms_}});
  const Item& item = q.items.at(id);
  Envelope env = item.env;
  env.delivery_count = item.claims - 1;
  return env;
}

bool Broker::ack(const std::string& queue, const std::string& correlation_id) {
  auto& q = state(queue);
  std::lock_guard<std::mutex> g(q.mu);
  FileLock::Guard fg(q.lock, /*exclusive=*/true);
  q.refresh();
  auto it = q.items.find(correlation_id);
  if (it == q.items.end() || it->second.state != Item::State::unacked) return false;
  q.commit({{"o", "ack"}, {"id", correlation_id}});
  return true;
}

bool Broker::nack(const std::string& queue, const std::string& correlation_id, bool requeue) {
  auto& q = state(queue);
  std::lock_guard<std::mutex> g(q.mu);
  FileLock::Guard fg(q.lock, /*exclusive=*/true);
  q.refresh();
  auto it = q.items.find(correlation_id);
  if (it == q.items.end() || it->second.state != Item::State::unacked) return false;
  if (!requeue || it->second.claims >= max_deliveries_)
    dead_letter_locked(q, correlation_id);
  else
    q.commit({{"o", "nack"}, {"id", correlation_id}});
  return true;
}

QueueDepths Broker::depths(const std::string& queue) {
  auto& q = state(queue);
  std::lock_guard<std::mutex> g(q.mu);
  FileLock::Guard fg(q.lock, /*exclusive=*/false);
  q.refresh();
  QueueDepths d;
  d.acked = q.acked;
  d.dead = q.dead;
  d.published = q.published;
  for (const auto& [id, item] : q.items) {
    if (item.state == Item::State::pending) ++d.pending;
    if (item.state == Item::State::unacked) ++d.unacked;
  }
  return d;
}

std::vector<std::string> Broker::queue_names() const {
  std::vector<std::string> out;
  if (std::filesystem::exists(dir_)) {
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      auto name = e.path().filename().string();
      if (name.size() > 6 && name.substr(name.size() - 6) == ".jsonl")
        out.push_back(name.substr(0, name.size() - 6));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Subscription::Subscription(Broker& broker, std::string queue,
                           std::function<void(const Envelope&)> handler, int threads,
                           Millis poll_ms)
    : broker_(broker), queue_(std::move(queue)), handler_(std::move(handler)),
      poll_ms_(poll_ms) {
  broker_.declare_queue(queue_);
  for (int i = 0; i < threads; ++i) threads_.emplace_back([this] { run(); });
}

Subscription::~Subscription() { stop(); }

void Subscription::stop() {
  stop_.store(true);
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  threads_.clear();
}

void Subscription::run() {
  while (!stop_.load()) {
    std::optional<Envelope> env;
    try {
      env = broker_.try_claim(queue_);
    } catch (const std::exception&) {
      env.reset();  // transient storage trouble: back off and retry
    }
    if (!env) {
      std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms_));
      continue;
    }
    try {
      handler_(*env);
      broker_.ack(queue_, env->correlation_id);
      handled_.fetch_add(1);
    } catch (const std::exception&) {
      try {
        broker_.nack(queue_, env->correlation_id);
      } catch (const std::exception&) {
      }
    }
  }
}

}  // namespace shardline

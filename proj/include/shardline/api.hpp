#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "shardline/auth.hpp"
#include "shardline/broker.hpp"
#include "shardline/cache.hpp"
#include "shardline/config.hpp"
#include "shardline/predictor.hpp"
#include "shardline/store.hpp"

namespace shardline {

struct ApiMetricsSnapshot {
  std::int64_t requests = 0;
  std::int64_t failures_5xx = 0;
  std::int64_t cache_hits = 0;
  std::int64_t cache_misses = 0;
  std::int64_t jobs_submitted = 0;
  std::int64_t responses_consumed = 0;
  std::int64_t sync_predictions = 0;

  Json to_json() const;
};

struct PredictorEndpoint {
  std::string host;
  int port = 0;
};

// Shared dependencies for one back-end instance. Several instances may share
// the same store/broker/cache objects in one process, or each process builds
// its own over the same data directory.
struct ApiContext {
  std::shared_ptr<ShardedStore> store;
  std::shared_ptr<Broker> broker;
  std::shared_ptr<TtlCache> cache;
  std::shared_ptr<TokenSigner> signer;
  std::shared_ptr<Clock> clock;
  std::shared_ptr<Scorer> scorer;  // powers what-if and sync-mode fallbacks
  PredictionMode mode = PredictionMode::async;
  std::vector<PredictorEndpoint> predictors;  // sync-mode upstream RPC targets
  Millis sync_call_timeout_ms = 15000;
  int response_consumer_threads = 2;
};

// One stateless HTTP instance of the application back-end. In async mode it
// also runs a consumer on the response queue that settles prediction jobs.
class ApiServer {
public:
  ApiServer(std::string instance_name, ApiContext ctx, int http_threads);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // port 0 binds an ephemeral port; see port() for the result.
  bool start(const std::string& host, int port);
  void stop();

  bool running() const;
  int port() const;
  const std::string& host() const;
  const std::string& name() const;
  ApiMetricsSnapshot metrics() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace shardline

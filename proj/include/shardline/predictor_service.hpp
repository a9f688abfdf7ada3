#pragma once

#include <memory>
#include <string>

#include "shardline/broker.hpp"
#include "shardline/predictor.hpp"

namespace shardline {

// Synchronous prediction RPC: POST /predict scores immediately, but only
// worker_slots requests run at once; the rest wait up to request_timeout_ms
// for a slot and then get 503, which is how this mode falls over under load.
class SyncPredictorServer {
public:
  SyncPredictorServer(std::string instance_name, ModelConfig model, int http_threads);
  ~SyncPredictorServer();
  SyncPredictorServer(const SyncPredictorServer&) = delete;
  SyncPredictorServer& operator=(const SyncPredictorServer&) = delete;

  bool start(const std::string& host, int port);
  void stop();

  bool running() const;
  int port() const;
  std::int64_t served() const;
  std::int64_t rejected() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Asynchronous prediction workers: worker_slots consumers drain the request
// queue at their own pace and publish responses keyed by correlation id.
// Bad payloads turn into error responses so the job settles as failed.
class AsyncPredictorWorkers {
public:
  AsyncPredictorWorkers(Broker& broker, ModelConfig model);
  ~AsyncPredictorWorkers();
  AsyncPredictorWorkers(const AsyncPredictorWorkers&) = delete;
  AsyncPredictorWorkers& operator=(const AsyncPredictorWorkers&) = delete;

  void stop();
  std::int64_t processed() const;
  std::int64_t errored() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace shardline

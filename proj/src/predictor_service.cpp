#include "shardline/predictor_service.hpp"

#include <httplib.h>

#include <atomic>
#include <thread>

#include "shardline/errors.hpp"
#include "shardline/pool.hpp"

namespace shardline {

struct SyncPredictorServer::Impl {
  Impl(std::string n, ModelConfig m, int t)
      : name(std::move(n)),
        scorer(m),
        slots(m.worker_slots, m.request_timeout_ms),
        threads(t) {}

  const std::string name;
  Scorer scorer;
  ConnectionPool slots;  // bounded concurrency gate, FIFO like the db pools
  const int threads;

  httplib::Server server;
  std::thread server_thread;
  std::atomic<bool> running{false};
  int port = 0;
  std::atomic<std::int64_t> served{0};
  std::atomic<std::int64_t> rejected{0};
};

SyncPredictorServer::SyncPredictorServer(std::string instance_name, ModelConfig model,
                                         int http_threads)
    : impl_(std::make_unique<Impl>(std::move(instance_name), std::move(model), http_threads)) {}

SyncPredictorServer::~SyncPredictorServer() { stop(); }

bool SyncPredictorServer::start(const std::string& host, int port) {
  auto& im = *impl_;
  if (im.running.load()) return true;
  im.server.new_task_queue = [&im] { return new httplib::ThreadPool(im.threads); };
  im.server.set_keep_alive_max_count(1000000);
  // Outlive gateway/client think gaps so idle closes never race reconnects.
  im.server.set_keep_alive_timeout(30);
  im.server.set_tcp_nodelay(true);

  im.server.Get("/healthz", [&im](const httplib::Request&, httplib::Response& res) {
    res.set_content(Json{{"status", "ok"}, {"instance", im.name}}.dump(), "application/json");
  });

  im.server.Post("/predict", [&im](const httplib::Request& req, httplib::Response& res) {
    Json body = Json::parse(req.body, nullptr, /*allow_exceptions=*/false);
    if (body.is_discarded() || !body.contains("features")) {
      res.status = 400;
      res.set_content(R"({"error":"bad_request"})", "application/json");
      return;
    }
    try {
      auto slot = im.slots.acquire();  // waits request_timeout_ms at most
      FeatureVector features = body.at("features").get<FeatureVector>();
      PredictionRecord rec = im.scorer.predict(features);
      rec.user_id = body.value("user_id", 0LL);
      im.served.fetch_add(1);
      res.set_content(Json(rec).dump(), "application/json");
    } catch (const PoolTimeoutError&) {
      im.rejected.fetch_add(1);
      res.status = 503;
      res.set_content(R"({"error":"overloaded","message":"no free prediction slot"})",
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(Json{{"error", "internal"}, {"message", e.what()}}.dump(),
                      "application/json");
    }
  });

  if (port == 0) {
    im.port = im.server.bind_to_any_port(host);
    if (im.port < 0) return false;
  } else {
    if (!im.server.bind_to_port(host, port)) return false;
    im.port = port;
  }
  im.server_thread = std::thread([&im] { im.server.listen_after_bind(); });
  im.server.wait_until_ready();
  im.running.store(true);
  return true;
}

void SyncPredictorServer::stop() {
  auto& im = *impl_;
  if (!im.running.exchange(false)) return;
  im.server.stop();
  if (im.server_thread.joinable()) im.server_thread.join();
}

bool SyncPredictorServer::running() const { return impl_->running.load(); }
int SyncPredictorServer::port() const { return impl_->port; }
std::int64_t SyncPredictorServer::served() const { return impl_->served.load(); }
std::int64_t SyncPredictorServer::rejected() const { return impl_->rejected.load(); }

struct AsyncPredictorWorkers::Impl {
  Impl(Broker& broker, ModelConfig model) : scorer(model) {
    broker.declare_queue(kRequestQueue);
    broker.declare_queue(kResponseQueue);
    subscription = std::make_unique<Subscription>(
        broker, kRequestQueue,
        [this, &broker](const Envelope& env) { handle(broker, env); },
        model.worker_slots);
  }

  void handle(Broker& broker, const Envelope& env) {
    const Json& p = env.payload;
    const std::string cid = p.value("correlation_id", env.correlation_id);
    const UserId uid = p.value("user_id", 0LL);
    Json response;
    if (!p.contains("features")) {
      response = make_prediction_error(cid, uid, "malformed prediction request");
      errored.fetch_add(1);
    } else {
      try {
        FeatureVector features = p.at("features").get<FeatureVector>();
        PredictionRecord rec = scorer.predict(features);
        rec.user_id = uid;
        response = make_prediction_response(cid, uid, rec);
        processed.fetch_add(1);
      } catch (const std::exception& e) {
        response = make_prediction_error(cid, uid, e.what());
        errored.fetch_add(1);
      }
    }
    // publish-then-ack: a crash in between redelivers the request, and the
    // duplicate response is absorbed by the idempotent job completion
    broker.publish(kResponseQueue, cid, response);
  }

  Scorer scorer;
  std::unique_ptr<Subscription> subscription;
  std::atomic<std::int64_t> processed{0};
  std::atomic<std::int64_t> errored{0};
};

AsyncPredictorWorkers::AsyncPredictorWorkers(Broker& broker, ModelConfig model)
    : impl_(std::make_unique<Impl>(broker, std::move(model))) {}

AsyncPredictorWorkers::~AsyncPredictorWorkers() { stop(); }

void AsyncPredictorWorkers::stop() { impl_->subscription.reset(); }

std::int64_t AsyncPredictorWorkers::processed() const { return impl_->processed.load(); }
std::int64_t AsyncPredictorWorkers::errored() const { return impl_->errored.load(); }

}  // namespace shardline

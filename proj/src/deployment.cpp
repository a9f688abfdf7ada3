#include "shardline/deployment.hpp"

#include <stdexcept>

namespace shardline {

std::string to_string(Role r) {
  switch (r) {
    case Role::gateway: return "gateway";
    case Role::backend: return "backend";
    case Role::predictor: return "predictor";
    case Role::all_in_one: return "all-in-one";
  }
  return "?";
}

std::optional<Role> role_from_string(const std::string& s) {
  if (s == "gateway") return Role::gateway;
  if (s == "backend") return Role::backend;
  if (s == "predictor") return Role::predictor;
  if (s == "all-in-one" || s == "all_in_one") return Role::all_in_one;
  return std::nullopt;
}

Deployment::Deployment(DeploymentConfig config) : config_(std::move(config)) {}

Deployment::~Deployment() { stop(); }

void Deployment::build_shared() {
  if (clock_) return;
  clock_ = SystemClock::shared();
  auto directory =
      std::make_shared<ShardDirectory>(config_.shard_map(), config_.auto_extend_shards);
  store_ = std::make_shared<ShardedStore>(config_.data_dir, directory,
                                          config_.pool_max_connections,
                                          config_.pool_acquire_timeout_ms);
  broker_ = std::make_shared<Broker>(std::filesystem::path(config_.data_dir) / "queues",
                                     clock_, config_.broker_visibility_ms,
                                     config_.broker_max_deliveries);
  cache_ = std::make_shared<TtlCache>(clock_, config_.cache_max_entries, config_.cache_ttl_ms);
  signer_ = std::make_shared<TokenSigner>(config_.auth_secret, clock_, config_.token_ttl_ms);
  scorer_ = std::make_shared<Scorer>(config_.model);
}

ApiContext Deployment::make_api_context() {
  ApiContext ctx;
  ctx.store = store_;
  ctx.broker = broker_;
  ctx.cache = cache_;
  ctx.signer = signer_;
  ctx.clock = clock_;
  ctx.scorer = scorer_;
  ctx.mode = config_.prediction_mode;
  for (const auto& p : config_.predictors) ctx.predictors.push_back({p.host, p.port});
  // must outlast a predictor-side slot wait plus the inference itself
  ctx.sync_call_timeout_ms =
      config_.model.request_timeout_ms + config_.model.inference_delay_ms + 5000;
  return ctx;
}

void Deployment::start_predictor(int index, const InstanceConfig& at) {
  if (config_.prediction_mode == PredictionMode::sync) {
    auto server = std::make_unique<SyncPredictorServer>(
        "predictor-" + std::to_string(index), config_.model, config_.predictor_threads);
    if (!server->start(at.host, at.port))
      throw std::runtime_error("predictor " + std::to_string(index) + " failed to bind " +
                               at.host + ":" + std::to_string(at.port));
    sync_predictors_.push_back(std::move(server));
  } else if (!async_workers_) {
    // async: one worker pool per process drains the shared request queue
    async_workers_ = std::make_unique<AsyncPredictorWorkers>(*broker_, config_.model);
  }
}

void Deployment::start_backend(int index, const InstanceConfig& at) {
  auto server = std::make_unique<ApiServer>("backend-" + std::to_string(index),
                                            make_api_context(), config_.backend_threads);
  if (!server->start(at.host, at.port))
    throw std::runtime_error("backend " + std::to_string(index) + " failed to bind " +
                             at.host + ":" + std::to_string(at.port));
  backends_.push_back(std::move(server));
}

void Deployment::start_gateway(const std::vector<InstanceConfig>& backends) {
  GatewayOptions opts;
  opts.http_threads = config_.gateway_threads;
  gateway_ = std::make_unique<Gateway>(backends, opts);
  if (!gateway_->start(config_.gateway_host, config_.gateway_port))
    throw std::runtime_error("gateway failed to bind " + config_.gateway_host + ":" +
                             std::to_string(config_.gateway_port));
}

void Deployment::start(Role role, int index) {
  if (started_) throw std::logic_error("deployment already started");
  started_ = true;
  switch (role) {
    case Role::gateway:
      start_gateway(config_.backends);
      return;
    case Role::predictor:
      build_shared();
      if (index < 0 || index >= static_cast<int>(config_.predictors.size()))
        throw std::out_of_range("predictor index out of range");
      start_predictor(index, config_.predictors[index]);
      return;
    case Role::backend:
      build_shared();
      if (index < 0 || index >= static_cast<int>(config_.backends.size()))
        throw std::out_of_range("backend index out of range");
      start_backend(index, config_.backends[index]);
      return;
    case Role::all_in_one:
      break;
  }

  build_shared();
  for (std::size_t i = 0; i < config_.predictors.size(); ++i)
    start_predictor(static_cast<int>(i), config_.predictors[i]);
  // sync targets must point at the ports the predictors actually got
  for (std::size_t i = 0; i < sync_predictors_.size(); ++i)
    config_.predictors[i].port = sync_predictors_[i]->port();

  for (std::size_t i = 0; i < config_.backends.size(); ++i)
    start_backend(static_cast<int>(i), config_.backends[i]);
  std::vector<InstanceConfig> resolved;
  for (const auto& b : backends_) resolved.push_back({b->host(), b->port()});
  start_gateway(resolved);
}

void Deployment::stop() {
  gateway_.reset();
  backends_.clear();
  async_workers_.reset();
  sync_predictors_.clear();
  started_ = false;
}

int Deployment::gateway_port() const { return gateway_ ? gateway_->port() : 0; }

std::vector<int> Deployment::backend_ports() const {
  std::vector<int> out;
  for (const auto& b : backends_) out.push_back(b->port());
  return out;
}

std::vector<int> Deployment::predictor_ports() const {
  std::vector<int> out;
  for (const auto& p : sync_predictors_) out.push_back(p->port());
  return out;
}

std::string Deployment::gateway_url() const {
  return "http://" + config_.gateway_host + ":" + std::to_string(gateway_port());
}

Json Deployment::status() const {
  Json j = {{"mode", to_string(config_.prediction_mode)}};
  if (gateway_) {
    j["gateway"] = gateway_->status();
    j["gateway"]["port"] = gateway_->port();
  }
  Json bs = Json::array();
  for (const auto& b : backends_) {
    bs.push_back({{"name", b->name()},
                  {"port", b->port()},
                  {"metrics", b->metrics().to_json()}});
  }
  j["backends"] = bs;
  Json ps = Json::array();
  for (const auto& p : sync_predictors_)
    ps.push_back({{"port", p->port()}, {"served", p->served()}, {"rejected", p->rejected()}});
  j["predictors"] = ps;
  if (async_workers_)
    j["async_workers"] = {{"processed", async_workers_->processed()},
                          {"errored", async_workers_->errored()}};
  return j;
}

}  // namespace shardline

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shardline/api.hpp"
#include "shardline/config.hpp"
#include "shardline/gateway.hpp"
#include "shardline/predictor_service.hpp"

namespace shardline {

enum class Role { gateway, backend, predictor, all_in_one };
std::string to_string(Role r);
std::optional<Role> role_from_string(const std::string& s);

// Builds and owns the processes' slice of a deployment: every role shares
// the same data directory (store WALs + broker logs), so separate processes
// coordinate purely through the filesystem. all_in_one runs the whole
// topology in-process on ephemeral ports, which is what the tests use.
class Deployment {
public:
  explicit Deployment(DeploymentConfig config);
  ~Deployment();
  Deployment(const Deployment&) = delete;
  Deployment& operator=(const Deployment&) = delete;

  // index picks which configured backend/predictor instance this process is.
  void start(Role role, int index = 0);
  void stop();

  const DeploymentConfig& config() const { return config_; }
  int gateway_port() const;
  std::vector<int> backend_ports() const;
  std::vector<int> predictor_ports() const;
  std::string gateway_url() const;

  std::shared_ptr<ShardedStore> store() { return store_; }
  std::shared_ptr<Broker> broker() { return broker_; }
  Gateway* gateway() { return gateway_.get(); }
  ApiServer* backend(int index) { return backends_.at(index).get(); }
  Json status() const;

private:
  void build_shared();
  ApiContext make_api_context();
  void start_predictor(int index, const InstanceConfig& at);
  void start_backend(int index, const InstanceConfig& at);
  void start_gateway(const std::vector<InstanceConfig>& backends);

  DeploymentConfig config_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<ShardedStore> store_;
  std::shared_ptr<Broker> broker_;
  std::shared_ptr<TtlCache> cache_;
  std::shared_ptr<TokenSigner> signer_;
  std::shared_ptr<Scorer> scorer_;

  std::vector<std::unique_ptr<SyncPredictorServer>> sync_predictors_;
  std::unique_ptr<AsyncPredictorWorkers> async_workers_;
  std::vector<std::unique_ptr<ApiServer>> backends_;
  std::unique_ptr<Gateway> gateway_;
  bool started_ = false;
};

}  // namespace shardline

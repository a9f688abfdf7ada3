#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shardline/json_util.hpp"
#include "shardline/predictor.hpp"
#include "shardline/shard_router.hpp"

namespace shardline {

enum class PredictionMode { sync, async };
std::string to_string(PredictionMode m);

struct InstanceConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 = pick a free port at bind time

  bool operator==(const InstanceConfig&) const = default;
};

// One config file drives every role of a deployment (versioned schema v1).
struct DeploymentConfig {
  int version = 1;
  std::string data_dir = "./shardline-data";

  // sharding: either shorthand (shards x capacity) or explicit ranges
  int shards = 2;
  std::int64_t shard_capacity = 5000;
  bool auto_extend_shards = false;
  std::vector<ShardRange> shard_ranges;  // empty = derive from shards/capacity

  int pool_max_connections = 100;  // desk-scale default; production analog 1000
  Millis pool_acquire_timeout_ms = 5000;

  Millis broker_visibility_ms = 30 * 1000;
  int broker_max_deliveries = 5;

  ModelConfig model;
  PredictionMode prediction_mode = PredictionMode::async;

  std::string gateway_host = "127.0.0.1";
  int gateway_port = 8080;
  std::vector<InstanceConfig> backends = {{"127.0.0.1", 0}, {"127.0.0.1", 0}};
  std::vector<InstanceConfig> predictors = {{"127.0.0.1", 0}, {"127.0.0.1", 0}};

  Millis cache_ttl_ms = 3600LL * 1000;
  std::int64_t cache_max_entries = 100000;

  std::string auth_secret = "dev-secret-change-me";
  Millis token_ttl_ms = 24LL * 3600 * 1000;

  // server thread budgets (one core has to fit thousands of keep-alive VUs)
  int gateway_threads = 256;
  int backend_threads = 128;
  int predictor_threads = 32;

  ShardMap shard_map() const;

  bool operator==(const DeploymentConfig&) const = default;
};

// Both throw ConfigError carrying the JSON path of the offending field.
DeploymentConfig parse_config(const Json& j);
Json config_to_json(const DeploymentConfig& c);

DeploymentConfig load_config_file(const std::filesystem::path& path);
void save_config_file(const DeploymentConfig& c, const std::filesystem::path& path);

// --config beats $SHARDLINE_CONFIG beats built-in defaults.
DeploymentConfig resolve_config(const std::string& config_flag);

}  // namespace shardline

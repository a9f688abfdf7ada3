#include "shardline/config.hpp"

#include <cstdlib>
#include <fstream>

#include "shardline/errors.hpp"

namespace shardline {

std::string to_string(PredictionMode m) {
  return m == PredictionMode::sync ? "sync" : "async";
}

ShardMap DeploymentConfig::shard_map() const {
  if (!shard_ranges.empty()) return ShardMap(shard_ranges, shard_capacity);
  return ShardMap::uniform(shards, shard_capacity);
}

namespace {

template <class T>
T field(const Json& j, const std::string& section, const std::string& name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(section.empty() ? name : section + "." + name, e.what());
  }
}

void require_range(const std::string& path, std::int64_t value, std::int64_t lo,
                   std::int64_t hi) {
  if (value < lo || value > hi)
    throw ConfigError(path, "value " + std::to_string(value) + " outside [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

std::vector<InstanceConfig> parse_instances(const Json& j, const std::string& path) {
  std::vector<InstanceConfig> out;
  if (!j.is_array()) throw ConfigError(path, "expected an array of {host, port}");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const Json& e = j[i];
    if (!e.is_object()) throw ConfigError(p, "expected an object");
    InstanceConfig ic;
    ic.host = field(e, p, "host", std::string("127.0.0.1"));
    ic.port = field(e, p, "port", 0);
    require_range(p + ".port", ic.port, 0, 65535);
    out.push_back(std::move(ic));
  }
  return out;
}

}  // namespace

DeploymentConfig parse_config(const Json& j) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  DeploymentConfig c;
  c.version = field(j, "", "version", 1);
  if (c.version != 1) throw ConfigError("version", "unsupported schema version");
  c.data_dir = field(j, "", "data_dir", c.data_dir);
  if (c.data_dir.empty()) throw ConfigError("data_dir", "must not be empty");

  if (j.contains("sharding")) {
    const Json& s = j.at("sharding");
    c.shards = field(s, "sharding", "shards", c.shards);
    c.shard_capacity = field(s, "sharding", "capacity", c.shard_capacity);
    c.auto_extend_shards = field(s, "sharding", "auto_extend", c.auto_extend_shards);
    require_range("sharding.shards", c.shards, 1, 64);
    require_range("sharding.capacity", c.shard_capacity, 1, 1000000000);
    if (s.contains("ranges")) {
      const Json& rs = s.at("ranges");
      if (!rs.is_array()) throw ConfigError("sharding.ranges", "expected an array");
      for (std::size_t i = 0; i < rs.size(); ++i) {
        const std::string p = "sharding.ranges[" + std::to_string(i) + "]";
        try {
          c.shard_ranges.push_back(rs[i].get<ShardRange>());
        } catch (const Json::exception& e) {
          throw ConfigError(p, e.what());
        }
      }
    }
  }
  try {
    c.shard_map();  // validates contiguity and spans
  } catch (const std::invalid_argument& e) {
    throw ConfigError(c.shard_ranges.empty() ? "sharding" : "sharding.ranges", e.what());
  }

  if (j.contains("pool")) {
    const Json& p = j.at("pool");
    c.pool_max_connections = field(p, "pool", "max_connections", c.pool_max_connections);
    c.pool_acquire_timeout_ms = field(p, "pool", "acquire_timeout_ms", c.pool_acquire_timeout_ms);
    require_range("pool.max_connections", c.pool_max_connections, 1, 100000);
    require_range("pool.acquire_timeout_ms", c.pool_acquire_timeout_ms, 1, 3600000);
  }

  if (j.contains("broker")) {
    const Json& b = j.at("broker");
    c.broker_visibility_ms = field(b, "broker", "visibility_ms", c.broker_visibility_ms);
    c.broker_max_deliveries = field(b, "broker", "max_deliveries", c.broker_max_deliveries);
    require_range("broker.visibility_ms", c.broker_visibility_ms, 1, 86400000);
    require_range("broker.max_deliveries", c.broker_max_deliveries, 1, 1000);
  }

  if (j.contains("model")) {
    const Json& m = j.at("model");
    try {
      c.model = m.get<ModelConfig>();
    } catch (const Json::exception& e) {
      throw ConfigError("model", e.what());
    }
    if (m.contains("weights") && m.at("weights").size() != kFactorCount)
      throw ConfigError("model.weights",
                        "expected " + std::to_string(kFactorCount) + " weights");
    require_range("model.worker_slots", c.model.worker_slots, 1, 4096);
    require_range("model.inference_delay_ms", c.model.inference_delay_ms, 0, 600000);
    require_range("model.request_timeout_ms", c.model.request_timeout_ms, 1, 600000);
  }

  const std::string mode = field(j, "", "prediction_mode", std::string("async"));
  if (mode == "sync")
    c.prediction_mode = PredictionMode::sync;
  else if (mode == "async")
    c.prediction_mode = PredictionMode::async;
  else
    throw ConfigError("prediction_mode", "expected \"sync\" or \"async\", got \"" + mode + "\"");

  if (j.contains("gateway")) {
    const Json& g = j.at("gateway");
    c.gateway_host = field(g, "gateway", "host", c.gateway_host);
    c.gateway_port = field(g, "gateway", "port", c.gateway_port);
    c.gateway_threads = field(g, "gateway", "threads", c.gateway_threads);
    require_range("gateway.port", c.gateway_port, 0, 65535);
    require_range("gateway.threads", c.gateway_threads, 1, 65536);
  }
  if (j.contains("backends")) c.backends = parse_instances(j.at("backends"), "backends");
  if (j.contains("predictors")) c.predictors = parse_instances(j.at("predictors"), "predictors");
  if (c.backends.empty()) throw ConfigError("backends", "at least one backend required");
  if (c.predictors.empty()) throw ConfigError("predictors", "at least one predictor required");

  if (j.contains("cache")) {
    const Json& k = j.at("cache");
    c.cache_ttl_ms = field(k, "cache", "ttl_ms", c.cache_ttl_ms);
    c.cache_max_entries = field(k, "cache", "max_entries", c.cache_max_entries);
    require_range("cache.ttl_ms", c.cache_ttl_ms, 1, 7LL * 86400000);
    require_range("cache.max_entries", c.cache_max_entries, 1, 100000000);
  }

  if (j.contains("auth")) {
    const Json& a = j.at("auth");
    c.auth_secret = field(a, "auth", "secret", c.auth_secret);
    c.token_ttl_ms = field(a, "auth", "token_ttl_ms", c.token_ttl_ms);
    if (c.auth_secret.empty()) throw ConfigError("auth.secret", "must not be empty");
    require_range("auth.token_ttl_ms", c.token_ttl_ms, 1000, 365LL * 86400000);
  }

  if (j.contains("http")) {
    const Json& h = j.at("http");
    c.backend_threads = field(h, "http", "backend_threads", c.backend_threads);
    c.predictor_threads = field(h, "http", "predictor_threads", c.predictor_threads);
    require_range("http.backend_threads", c.backend_threads, 1, 65536);
    require_range("http.predictor_threads", c.predictor_threads, 1, 65536);
  }
  return c;
}

Json config_to_json(const DeploymentConfig& c) {
  Json j;
  j["version"] = c.version;
  j["data_dir"] = c.data_dir;
  Json sharding = {{"shards", c.shards},
                   {"capacity", c.shard_capacity},
                   {"auto_extend", c.auto_extend_shards}};
  if (!c.shard_ranges.empty()) sharding["ranges"] = c.shard_ranges;
  j["sharding"] = sharding;
  j["pool"] = {{"max_connections", c.pool_max_connections},
               {"acquire_timeout_ms", c.pool_acquire_timeout_ms}};
  j["broker"] = {{"visibility_ms", c.broker_visibility_ms},
                 {"max_deliveries", c.broker_max_deliveries}};
  j["model"] = Json(c.model);
  j["prediction_mode"] = to_string(c.prediction_mode);
  j["gateway"] = {{"host", c.gateway_host},
                  {"port", c.gateway_port},
                  {"threads", c.gateway_threads}};
  auto dump_instances = [](const std::vector<InstanceConfig>& v) {
    Json arr = Json::array();
    for (const auto& i : v) arr.push_back({{"host", i.host}, {"port", i.port}});
    return arr;
  };
  j["backends"] = dump_instances(c.backends);
  j["predictors"] = dump_instances(c.predictors);
  j["cache"] = {{"ttl_ms", c.cache_ttl_ms}, {"max_entries", c.cache_max_entries}};
  j["auth"] = {{"secret", c.auth_secret}, {"token_ttl_ms", c.token_ttl_ms}};
  j["http"] = {{"backend_threads", c.backend_threads},
               {"predictor_threads", c.predictor_threads}};
  return j;
}

DeploymentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  Json j = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("", "config file is not valid JSON: " + path.string());
  return parse_config(j);
}

void save_config_file(const DeploymentConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << config_to_json(c).dump(2) << "\n";
}

DeploymentConfig resolve_config(const std::string& config_flag) {
  if (!config_flag.empty()) return load_config_file(config_flag);
  if (const char* env = std::getenv("SHARDLINE_CONFIG"); env && *env)
    return load_config_file(env);
  return DeploymentConfig{};
}

}  // namespace shardline

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shardline/clock.hpp"
#include "shardline/config.hpp"
#include "shardline/json_util.hpp"

namespace shardline {

struct GatewayOptions {
  Millis health_interval_ms = 2000;
  int unhealthy_after = 3;   // consecutive failed health probes
  int healthy_after = 2;     // consecutive ok probes to rejoin rotation
  Millis upstream_timeout_ms = 30000;
  int http_threads = 256;
  std::optional<std::filesystem::path> access_log;  // tab-separated when set
};

// Round-robin reverse proxy over the stateless back-end instances. Keeps a
// health view per backend and retries idempotent requests once on a
// different instance when the first attempt dies in transport.
class Gateway {
public:
  Gateway(std::vector<InstanceConfig> backends, GatewayOptions options = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  bool start(const std::string& host, int port);  // port 0 = ephemeral
  void stop();

  bool running() const;
  int port() const;

  // {"backends":[{host,port,healthy,forwarded,transport_failures}...]}
  Json status() const;
  int healthy_count() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace shardline

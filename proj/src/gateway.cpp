#include "shardline/gateway.hpp"

#include <httplib.h>

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "shardline/http_client.hpp"

namespace shardline {

namespace {

bool idempotent(const std::string& method) {
  return method == "GET" || method == "PUT" || method == "DELETE" || method == "HEAD";
}

}  // namespace

struct Backend {
  InstanceConfig endpoint;
  std::atomic<bool> healthy{true};
  std::atomic<int> probe_failures{0};
  std::atomic<int> probe_oks{0};
  std::atomic<std::int64_t> forwarded{0};
  std::atomic<std::int64_t> transport_failures{0};
};

struct Gateway::Impl {
  Impl(std::vector<InstanceConfig> eps, GatewayOptions opts) : options(std::move(opts)) {
    for (auto& ep : eps) {
      auto b = std::make_unique<Backend>();
      b->endpoint = std::move(ep);
      backends.push_back(std::move(b));
    }
  }

  const GatewayOptions options;
  std::vector<std::unique_ptr<Backend>> backends;

  httplib::Server server;
  std::thread server_thread;
  std::thread health_thread;
  std::atomic<bool> running{false};
  int port = 0;
  std::atomic<std::uint64_t> rr{0};

  std::mutex log_mu;
  std::ofstream log_file;

  HttpClient& client_for(const Backend& b) {
    // keep-alive connection per (worker thread, backend)
    thread_local std::unordered_map<const Backend*, std::unique_ptr<HttpClient>> clients;
    auto& c = clients[&b];
    if (!c)
      c = std::make_unique<HttpClient>(b.endpoint.host, b.endpoint.port,
                                       options.upstream_timeout_ms);
    return *c;
  }

  Backend* pick(const Backend* skip) {
    const std::size_t n = backends.size();
    for (std::size_t i = 0; i < n; ++i) {
      Backend* b = backends[rr.fetch_add(1) % n].get();
      if (b == skip) continue;
      if (b->healthy.load()) return b;
    }
    return nullptr;
  }

  void mark_transport_failure(Backend& b) {
    b.transport_failures.fetch_add(1);
    // fast-path demotion: transport errors count like failed probes
    if (b.probe_failures.fetch_add(1) + 1 >= options.unhealthy_after) {
      b.healthy.store(false);
      b.probe_oks.store(0);
    }
  }

  void probe_all() {
    for (auto& bp : backends) {
      Backend& b = *bp;
      HttpClient probe(b.endpoint.host, b.endpoint.port, 2000);
      HttpResponse r = probe.get("/healthz");
      const bool ok = r.transport_ok() && r.status == 200;
      if (ok) {
        b.probe_failures.store(0);
        if (!b.healthy.load() && b.probe_oks.fetch_add(1) + 1 >= options.healthy_after)
          b.healthy.store(true);
      } else {
        b.probe_oks.store(0);
        if (b.probe_failures.fetch_add(1) + 1 >= options.unhealthy_after)
          b.healthy.store(false);
      }
    }
  }

  void access_log(const std::string& method, const std::string& target,
                  const std::string& backend, int status, double latency_ms) {
    if (!log_file.is_open()) return;
    std::lock_guard<std::mutex> g(log_mu);
    log_file << system_now_ms() << '\t' << method << '\t' << target << '\t' << backend
             << '\t' << status << '\t' << static_cast<std::int64_t>(latency_ms) << std::endl;
  }

  void forward(const httplib::Request& req, httplib::Response& res) {
    const double t0 = steady_now_ms();
    HttpHeaders headers;
    if (req.has_header("Authorization"))
      headers.emplace_back("Authorization", req.get_header_value("Authorization"));
    const std::string content_type = req.get_header_value("Content-Type");
    const std::string& target = req.target.empty() ? req.path : req.target;

    Backend* first = pick(nullptr);
    if (!first) {
      res.status = 503;
      res.set_content(R"({"error":"no_healthy_backends"})", "application/json");
      access_log(req.method, target, "-", 503, steady_now_ms() - t0);
      return;
    }

    Backend* attempt = first;
    for (int tries = 0; tries < 2 && attempt; ++tries) {
      HttpResponse upstream = client_for(*attempt).request(
          req.method, target, req.body, content_type, headers);
      if (upstream.transport_ok()) {
        attempt->forwarded.fetch_add(1);
        // demotion needs consecutive failures; a served request clears the tab
        attempt->probe_failures.store(0);
        res.status = upstream.status;
        res.set_content(upstream.body, upstream.content_type.empty()
                                           ? "application/json"
                                           : upstream.content_type.c_str());
        access_log(req.method, target,
                   attempt->endpoint.host + ":" + std::to_string(attempt->endpoint.port),
                   upstream.status, steady_now_ms() - t0);
        return;
      }
      mark_transport_failure(*attempt);
      // non-idempotent requests may have reached the backend; never replay them
      if (!idempotent(req.method)) break;
      attempt = pick(attempt);
    }

    res.status = 502;
    res.set_content(R"({"error":"bad_gateway","message":"all backends failed"})",
                    "application/json");
    access_log(req.method, target, "-", 502, steady_now_ms() - t0);
  }
};

Gateway::Gateway(std::vector<InstanceConfig> backends, GatewayOptions options)
    : impl_(std::make_unique<Impl>(std::move(backends), std::move(options))) {}

Gateway::~Gateway() { stop(); }

bool Gateway::start(const std::string& host, int port) {
  auto& im = *impl_;
  if (im.running.load()) return true;
  if (im.options.access_log) {
    im.log_file.open(*im.options.access_log, std::ios::app);
  }
  im.server.new_task_queue = [&im] { return new httplib::ThreadPool(im.options.http_threads); };
  im.server.set_keep_alive_max_count(1000000);
  // Well above any client think time, else the server-side idle close races
  // against connection reuse and shows up as spurious transport failures.
  im.server.set_keep_alive_timeout(30);
  im.server.set_tcp_nodelay(true);

  auto handler = [&im](const httplib::Request& req, httplib::Response& res) {
    im.forward(req, res);
  };
  const std::string any = R"((.*))";
  im.server.Get(any, handler);
  im.server.Post(any, handler);
  im.server.Put(any, handler);
  im.server.Patch(any, handler);
  im.server.Delete(any, handler);

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

  im.health_thread = std::thread([&im] {
    im.probe_all();  // settle initial state before traffic decisions
    while (im.running.load()) {
      for (Millis waited = 0; waited < im.options.health_interval_ms && im.running.load();
           waited += 50)
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      if (im.running.load()) im.probe_all();
    }
  });
  return true;
}

void Gateway::stop() {
  auto& im = *impl_;
  if (!im.running.exchange(false)) return;
  im.server.stop();
  if (im.server_thread.joinable()) im.server_thread.join();
  if (im.health_thread.joinable()) im.health_thread.join();
  if (im.log_file.is_open()) im.log_file.close();
}

bool Gateway::running() const { return impl_->running.load(); }
int Gateway::port() const { return impl_->port; }

Json Gateway::status() const {
  Json arr = Json::array();
  for (const auto& b : impl_->backends) {
    arr.push_back({{"host", b->endpoint.host},
                   {"port", b->endpoint.port},
                   {"healthy", b->healthy.load()},
                   {"forwarded", b->forwarded.load()},
                   {"transport_failures", b->transport_failures.load()}});
  }
  return Json{{"backends", arr}};
}

int Gateway::healthy_count() const {
  int n = 0;
  for (const auto& b : impl_->backends)
    if (b->healthy.load()) ++n;
  return n;
}

}  // namespace shardline

#include "shardline/loadgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "shardline/errors.hpp"
#include "shardline/http_client.hpp"

namespace shardline {

int Scenario::peak_vus() const {
  int peak = 0;
  for (const auto& s : ramp) peak = std::max(peak, s.target_vus);
  return peak;
}

int Scenario::total_duration_s() const {
  int total = 0;
  for (const auto& s : ramp) total += s.hold_s;
  return total;
}

void to_json(Json& j, const Scenario& s) {
  Json ramp = Json::array();
  for (const auto& st : s.ramp)
    ramp.push_back({{"target_vus", st.target_vus}, {"hold_s", st.hold_s}});
  j = Json{{"name", s.name},           {"method", s.method},
           {"path", s.path},           {"body", s.body},
           {"ramp", ramp},             {"think_time_ms", s.think_time_ms},
           {"request_timeout_ms", s.request_timeout_ms}};
}

void from_json(const Json& j, Scenario& s) {
  s.name = j.at("name").get<std::string>();
  s.method = j.value("method", "GET");
  s.path = j.at("path").get<std::string>();
  s.body = j.value("body", Json());
  s.ramp.clear();
  for (const auto& st : j.at("ramp"))
    s.ramp.push_back({st.at("target_vus").get<int>(), st.at("hold_s").get<int>()});
  if (s.ramp.empty()) throw Json::other_error::create(501, "ramp must not be empty", &j);
  s.think_time_ms = j.value("think_time_ms", 0LL);
  s.request_timeout_ms = j.value("request_timeout_ms", 10000LL);
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open scenario file " + path.string());
  Json j = Json::parse(in);
  return j.get<Scenario>();
}

std::string classify(double error_rate_pct, double avg_latency_ms) {
  const bool errors_ok = error_rate_pct <= kMaxErrorRatePct;
  const bool latency_ok = avg_latency_ms <= kMaxAvgLatencyMs;
  if (errors_ok && latency_ok) return "PASS";
  if (!errors_ok && !latency_ok) return "FAIL";
  return "PARTIAL";
}

double percentile_nearest_rank(std::vector<double> values, double pct) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(pct / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

LoadReport summarize(const std::string& scenario_name, const std::vector<Sample>& samples,
                     double duration_s) {
  LoadReport r;
  r.scenario = scenario_name;
  r.total = static_cast<std::int64_t>(samples.size());
  r.duration_s = duration_s;
  if (samples.empty()) {
    r.verdict = classify(0.0, 0.0);
    return r;
  }
  double latency_sum = 0.0;
  std::vector<double> latencies;
  latencies.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.ok) ++r.failures;
    latency_sum += s.latency_ms;
    latencies.push_back(s.latency_ms);
  }
  r.error_rate_pct = 100.0 * static_cast<double>(r.failures) / static_cast<double>(r.total);
  r.avg_latency_ms = latency_sum / static_cast<double>(r.total);
  r.p95_latency_ms = percentile_nearest_rank(std::move(latencies), 95.0);
  r.rps = duration_s > 0 ? static_cast<double>(r.total) / duration_s : 0.0;
  r.verdict = classify(r.error_rate_pct, r.avg_latency_ms);
  return r;
}

void to_json(Json& j, const LoadReport& r) {
  j = Json{{"scenario", r.scenario},
           {"total", r.total},
           {"failures", r.failures},
           {"error_rate_pct", r.error_rate_pct},
           {"avg_latency_ms", r.avg_latency_ms},
           {"p95_latency_ms", r.p95_latency_ms},
           {"rps", r.rps},
           {"duration_s", r.duration_s},
           {"verdict", r.verdict}};
}

void from_json(const Json& j, LoadReport& r) {
  r.scenario = j.at("scenario").get<std::string>();
  r.total = j.value("total", 0LL);
  r.failures = j.value("failures", 0LL);
  r.error_rate_pct = j.at("error_rate_pct").get<double>();
  r.avg_latency_ms = j.at("avg_latency_ms").get<double>();
  r.p95_latency_ms = j.value("p95_latency_ms", 0.0);
  r.rps = j.value("rps", 0.0);
  r.duration_s = j.value("duration_s", 0.0);
  r.verdict = j.value("verdict", classify(r.error_rate_pct, r.avg_latency_ms));
}

std::vector<Credential> read_credentials_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open credentials file " + path.string());
  std::vector<Credential> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {  // header: user_id,email,password
      first = false;
      continue;
    }
    std::stringstream ss(line);
    std::string id, email, password;
    std::getline(ss, id, ',');
    std::getline(ss, email, ',');
    std::getline(ss, password);
    if (!email.empty() && !password.empty()) out.push_back({email, password});
  }
  return out;
}

namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
};

ParsedUrl parse_base_url(const std::string& url) {
  std::string rest = url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  const auto slash = rest.find('/');
  if (slash != std::string::npos) rest = rest.substr(0, slash);
  ParsedUrl out;
  const auto colon = rest.find(':');
  if (colon == std::string::npos) {
    out.host = rest;
  } else {
    out.host = rest.substr(0, colon);
    out.port = std::stoi(rest.substr(colon + 1));
  }
  return out;
}

}  // namespace

RunResult run_scenario(const Scenario& scenario, const std::string& base_url,
                       const std::vector<Credential>& credentials) {
  if (credentials.empty()) throw AbortedRunError("no credentials to run with");
  const ParsedUrl target = parse_base_url(base_url);

  {  // refuse to hammer a dead target
    bool alive = false;
    for (int attempt = 0; attempt < 3 && !alive; ++attempt) {
      HttpClient probe(target.host, target.port, 2000);
      HttpResponse r = probe.get("/healthz");
      alive = r.transport_ok() && r.status == 200;
      if (!alive) std::this_thread::sleep_for(std::chrono::milliseconds(500));
    }
    if (!alive)
      throw AbortedRunError("target " + base_url + " failed its health probe");
  }

  const int peak = scenario.peak_vus();
  std::atomic<int> allowed_vus{0};
  std::atomic<bool> live{true};
  std::vector<std::vector<Sample>> per_vu(static_cast<std::size_t>(peak));
  const double run_start = steady_now_ms();

  auto vu_main = [&](int vu_index) {
    const Credential& cred = credentials[static_cast<std::size_t>(vu_index) %
                                         credentials.size()];
    HttpClient client(target.host, target.port, scenario.request_timeout_ms);
    std::string token;
    auto& samples = per_vu[static_cast<std::size_t>(vu_index)];

    while (live.load(std::memory_order_relaxed)) {
      if (vu_index >= allowed_vus.load(std::memory_order_relaxed)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        continue;
      }
      if (token.empty()) {
        const Json login = {{"email", cred.email}, {"password", cred.password}};
        HttpResponse r = client.post("/auth/login", login.dump());
        if (r.status == 200) {
          token = Json::parse(r.body).at("token").get<std::string>();
        } else {
          std::this_thread::sleep_for(std::chrono::milliseconds(200));
          continue;
        }
      }
      HttpHeaders headers{{"Authorization", "Bearer " + token}};
      const double t0 = steady_now_ms();
      HttpResponse r = client.request(scenario.method, scenario.path,
                                      scenario.body.is_null() ? "" : scenario.body.dump(),
                                      "application/json", headers);
      const double latency = steady_now_ms() - t0;
      Sample s;
      s.start_ms = static_cast<Millis>(t0 - run_start);
      s.latency_ms = latency;
      s.status = r.status;
      s.ok = r.transport_ok() && r.status < 500;
      samples.push_back(s);
      if (scenario.think_time_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(scenario.think_time_ms));
    }
  };

  std::vector<std::thread> vus;
  vus.reserve(static_cast<std::size_t>(peak));
  for (int i = 0; i < peak; ++i) vus.emplace_back(vu_main, i);

  for (const auto& stage : scenario.ramp) {
    allowed_vus.store(std::min(stage.target_vus, peak));
    for (int waited = 0; waited < stage.hold_s * 1000; waited += 100)
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  live.store(false);
  for (auto& t : vus) t.join();
  const double duration_s = (steady_now_ms() - run_start) / 1000.0;

  RunResult result;
  for (auto& v : per_vu) {
    result.samples.insert(result.samples.end(), v.begin(), v.end());
    v.clear();
  }
  std::sort(result.samples.begin(), result.samples.end(),
            [](const Sample& a, const Sample& b) { return a.start_ms < b.start_ms; });
  result.report = summarize(scenario.name, result.samples, duration_s);
  return result;
}

void write_samples_csv(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path.string());
  out << "start_ms,latency_ms,status,ok\n";
  for (const auto& s : samples)
    out << s.start_ms << ',' << s.latency_ms << ',' << s.status << ',' << (s.ok ? 1 : 0)
        << '\n';
}

void write_report_json(const std::filesystem::path& path, const LoadReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path.string());
  out << Json(report).dump(2) << '\n';
}

ReplaySummary replay_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MetricsParseError(0, "cannot open " + path.string());
  ReplaySummary summary;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != "name,error_rate,avg_latency")
        throw MetricsParseError(line_no, "expected header name,error_rate,avg_latency");
      saw_header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string name, err_s, avg_s;
    if (!std::getline(ss, name, ',') || !std::getline(ss, err_s, ',') ||
        !std::getline(ss, avg_s))
      throw MetricsParseError(line_no, "expected 3 comma-separated columns");
    ReplayRow row;
    row.name = name;
    try {
      std::size_t used = 0;
      row.error_rate_pct = std::stod(err_s, &used);
      if (used != err_s.size()) throw std::invalid_argument(err_s);
      row.avg_latency_ms = std::stod(avg_s, &used);
      if (used != avg_s.size()) throw std::invalid_argument(avg_s);
    } catch (const std::exception&) {
      throw MetricsParseError(line_no, "non-numeric metric value");
    }
    if (row.error_rate_pct < 0 || row.avg_latency_ms < 0)
      throw MetricsParseError(line_no, "metrics must be non-negative");
    row.verdict = classify(row.error_rate_pct, row.avg_latency_ms);
    if (row.verdict == "PASS")
      ++summary.pass;
    else if (row.verdict == "PARTIAL")
      ++summary.partial;
    else
      ++summary.fail;
    summary.rows.push_back(std::move(row));
  }
  if (!saw_header) throw MetricsParseError(line_no, "file is empty");
  return summary;
}

Json compare_modes(const LoadReport& sync_report, const LoadReport& async_report) {
  if (sync_report.scenario != async_report.scenario)
    throw ScenarioMismatchError("cannot compare runs of different scenarios: '" +
                                sync_report.scenario + "' vs '" + async_report.scenario + "'");
  Json ratio;  // null when the ratio diverges
  if (async_report.error_rate_pct > 0.0)
    ratio = sync_report.error_rate_pct / async_report.error_rate_pct;
  else if (sync_report.error_rate_pct == 0.0)
    ratio = 1.0;
  const bool async_superior =
      async_report.error_rate_pct < sync_report.error_rate_pct ||
      (async_report.error_rate_pct == sync_report.error_rate_pct &&
       async_report.avg_latency_ms < sync_report.avg_latency_ms);
  return Json{{"scenario", sync_report.scenario},
              {"sync", Json(sync_report)},
              {"async", Json(async_report)},
              {"error_rate_ratio", ratio},
              {"async_superior", async_superior}};
}

}  // namespace shardline

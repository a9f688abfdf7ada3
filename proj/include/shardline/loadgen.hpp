#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shardline/clock.hpp"
#include "shardline/json_util.hpp"

namespace shardline {

struct RampStage {
  int target_vus = 1;
  int hold_s = 10;

  bool operator==(const RampStage&) const = default;
};

struct Scenario {
  std::string name;
  std::string method = "GET";
  std::string path = "/healthz";
  Json body;  // request payload for POST/PUT, null otherwise
  std::vector<RampStage> ramp = {{10, 30}};
  Millis think_time_ms = 0;
  Millis request_timeout_ms = 10000;

  int peak_vus() const;
  int total_duration_s() const;
};

void to_json(Json& j, const Scenario& s);
void from_json(const Json& j, Scenario& s);
Scenario load_scenario_file(const std::filesystem::path& path);

struct Sample {
  Millis start_ms = 0;      // relative to run start
  double latency_ms = 0.0;
  int status = 0;           // 0 = transport failure/timeout
  bool ok = false;          // 2xx-4xx; 5xx and transport errors fail
};

// Verdict thresholds, both inclusive: a run passes when error rate stays at
// or under 5% and average latency at or under 1000 ms; breaching exactly one
// is PARTIAL, breaching both is FAIL.
inline constexpr double kMaxErrorRatePct = 5.0;
inline constexpr double kMaxAvgLatencyMs = 1000.0;
std::string classify(double error_rate_pct, double avg_latency_ms);

struct LoadReport {
  std::string scenario;
  std::int64_t total = 0;
  std::int64_t failures = 0;
  double error_rate_pct = 0.0;
  double avg_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  double rps = 0.0;
  double duration_s = 0.0;
  std::string verdict = "PASS";
};

void to_json(Json& j, const LoadReport& r);
void from_json(const Json& j, LoadReport& r);

LoadReport summarize(const std::string& scenario_name, const std::vector<Sample>& samples,
                     double duration_s);
double percentile_nearest_rank(std::vector<double> values, double pct);

struct Credential {
  std::string email;
  std::string password;
};

std::vector<Credential> read_credentials_csv(const std::filesystem::path& path);

struct RunResult {
  LoadReport report;
  std::vector<Sample> samples;
};

// Closed-loop run: each virtual user logs in once, then loops request ->
// think-time until the ramp schedule ends. Aborts (AbortedRunError) when the
// target fails its health probe before any load is applied.
RunResult run_scenario(const Scenario& scenario, const std::string& base_url,
                       const std::vector<Credential>& credentials);

void write_samples_csv(const std::filesystem::path& path, const std::vector<Sample>& samples);
void write_report_json(const std::filesystem::path& path, const LoadReport& report);

// --- replay: re-classify previously captured run metrics -------------------

struct ReplayRow {
  std::string name;
  double error_rate_pct = 0.0;
  double avg_latency_ms = 0.0;
  std::string verdict;
};

struct ReplaySummary {
  std::vector<ReplayRow> rows;
  int pass = 0;
  int partial = 0;
  int fail = 0;
};

// CSV columns: name,error_rate,avg_latency (header required).
// Throws MetricsParseError with the 1-based offending line.
ReplaySummary replay_metrics_csv(const std::filesystem::path& path);

// --- compare: sync-vs-async verdict for the same scenario ------------------

// Throws ScenarioMismatchError when the two reports describe different
// scenarios. error_rate_ratio is sync/async, null when async had zero
// errors while sync had some (the ratio diverges).
Json compare_modes(const LoadReport& sync_report, const LoadReport& async_report);

}  // namespace shardline

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "shardline/errors.hpp"
#include "shardline/loadgen.hpp"
#include "stub_server.hpp"
#include "table1_fixture.hpp"

using namespace shardline;
using shardline::testfix::StubReply;
using shardline::testfix::StubServer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() /
           ("shardline-loadgen-" + std::to_string(rd() % 1000000));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

LoadReport report_of(const std::string& scenario, double err_pct, double avg_ms) {
  LoadReport r;
  r.scenario = scenario;
  r.error_rate_pct = err_pct;
  r.avg_latency_ms = avg_ms;
  r.verdict = classify(err_pct, avg_ms);
  return r;
}

}  // namespace

TEST_SUITE("loadgen") {

TEST_CASE("classification matches the captured evaluation verdicts") {
  for (const auto& row : testfix::eval_rows()) {
    CAPTURE(row.name);
    CHECK(classify(row.error_rate_pct, row.avg_latency_ms) == row.expected_verdict);
  }
  // 16 PASS and 4 PARTIAL in the captured summary
  int pass = 0, partial = 0, fail = 0;
  for (const auto& row : testfix::eval_rows()) {
    if (row.expected_verdict == "PASS") ++pass;
    if (row.expected_verdict == "PARTIAL") ++partial;
    if (row.expected_verdict == "FAIL") ++fail;
  }
  CHECK(pass == 16);
  CHECK(partial == 4);
  CHECK(fail == 0);
}

TEST_CASE("both thresholds are inclusive") {
  CHECK(classify(5.0, 1000.0) == "PASS");      // exactly at both limits
  CHECK(classify(5.000001, 1000.0) == "PARTIAL");
  CHECK(classify(5.0, 1000.01) == "PARTIAL");
  CHECK(classify(5.01, 1000.01) == "FAIL");
  CHECK(classify(0.0, 0.0) == "PASS");
  CHECK(classify(100.0, 1.0) == "PARTIAL");
  CHECK(classify(0.0, 60000.0) == "PARTIAL");
}

TEST_CASE("nearest-rank percentile") {
  std::vector<double> hundred;
  for (int i = 1; i <= 100; ++i) hundred.push_back(i);
  CHECK(percentile_nearest_rank(hundred, 95.0) == 95.0);
  CHECK(percentile_nearest_rank(hundred, 100.0) == 100.0);
  CHECK(percentile_nearest_rank(hundred, 1.0) == 1.0);
  CHECK(percentile_nearest_rank({10.0, 20.0, 30.0}, 50.0) == 20.0);
  CHECK(percentile_nearest_rank({10.0, 20.0, 30.0}, 95.0) == 30.0);
  CHECK(percentile_nearest_rank({42.0}, 95.0) == 42.0);
  CHECK(percentile_nearest_rank({}, 95.0) == 0.0);
  // order in must not matter
  CHECK(percentile_nearest_rank({30.0, 10.0, 20.0}, 50.0) == 20.0);
}

TEST_CASE("summaries aggregate every sample, including failures") {
  std::vector<Sample> samples;
  for (int i = 0; i < 8; ++i) samples.push_back({i * 10, 100.0, 200, true});
  samples.push_back({80, 1000.0, 500, false});
  samples.push_back({90, 1000.0, 0, false});  // transport failure

  LoadReport r = summarize("mixed", samples, 2.0);
  CHECK(r.total == 10);
  CHECK(r.failures == 2);
  CHECK(r.error_rate_pct == doctest::Approx(20.0));
  CHECK(r.avg_latency_ms == doctest::Approx(280.0));  // (8*100 + 2*1000) / 10
  CHECK(r.p95_latency_ms == doctest::Approx(1000.0));
  CHECK(r.rps == doctest::Approx(5.0));
  CHECK(r.verdict == "PARTIAL");  // errors breached, latency fine

  LoadReport empty = summarize("empty", {}, 1.0);
  CHECK(empty.total == 0);
  CHECK(empty.verdict == "PASS");
}

TEST_CASE("scenarios round trip through json and files") {
  Scenario s;
  s.name = "checkout";
  s.method = "POST";
  s.path = "/predictions";
  s.body = Json{{"note", "x"}};
  s.ramp = {{5, 2}, {20, 8}, {10, 1}};
  s.think_time_ms = 250;
  s.request_timeout_ms = 3000;
  CHECK(s.peak_vus() == 20);
  CHECK(s.total_duration_s() == 11);

  Json j = Json(s);
  Scenario back = j.get<Scenario>();
  CHECK(back.name == s.name);
  CHECK(back.method == s.method);
  CHECK(back.body == s.body);
  CHECK(back.ramp == s.ramp);
  CHECK(back.think_time_ms == 250);

  TempDir tmp;
  const fs::path file = tmp.path / "scenario.json";
  std::ofstream(file) << j.dump(2);
  Scenario loaded = load_scenario_file(file);
  CHECK(loaded.ramp == s.ramp);

  Json no_ramp = j;
  no_ramp["ramp"] = Json::array();
  CHECK_THROWS_AS((void)no_ramp.get<Scenario>(), Json::exception);
}

TEST_CASE("credentials csv") {
  TempDir tmp;
  const fs::path file = tmp.path / "credentials.csv";
  std::ofstream(file) << "user_id,email,password\n"
                      << "1,user1@shardline.test,pw-one\n"
                      << "2,user2@shardline.test,pw-two\n"
                      << "\n"
                      << "3,user3@shardline.test,pw-three\n";
  auto creds = read_credentials_csv(file);
  REQUIRE(creds.size() == 3);
  CHECK(creds[0].email == "user1@shardline.test");
  CHECK(creds[0].password == "pw-one");
  CHECK(creds[2].password == "pw-three");
}

TEST_CASE("replay reclassifies captured metrics") {
  TempDir tmp;
  const fs::path file = tmp.path / "metrics.csv";
  {
    std::ofstream out(file);
    out << "name,error_rate,avg_latency\n";
    for (const auto& row : testfix::eval_rows())
      out << row.name << ',' << row.error_rate_pct << ',' << row.avg_latency_ms << '\n';
  }
  ReplaySummary summary = replay_metrics_csv(file);
  REQUIRE(summary.rows.size() == testfix::eval_rows().size());
  CHECK(summary.pass == 16);
  CHECK(summary.partial == 4);
  CHECK(summary.fail == 0);
  for (std::size_t i = 0; i < summary.rows.size(); ++i) {
    CAPTURE(summary.rows[i].name);
    CHECK(summary.rows[i].verdict == testfix::eval_rows()[i].expected_verdict);
  }

  SUBCASE("a failing row is counted") {
    std::ofstream(file) << "name,error_rate,avg_latency\nmeltdown,12.0,2400\n";
    ReplaySummary s2 = replay_metrics_csv(file);
    CHECK(s2.fail == 1);
    CHECK(s2.rows[0].verdict == "FAIL");
  }
}

TEST_CASE("replay rejects malformed files with the offending line") {
  TempDir tmp;
  const fs::path file = tmp.path / "metrics.csv";

  auto line_of = [&](const std::string& content) {
    std::ofstream(file) << content;
    try {
      replay_metrics_csv(file);
    } catch (const MetricsParseError& e) {
      return static_cast<long long>(e.line);
    }
    return -1LL;
  };

  CHECK(line_of("wrong,header,here\n") == 1);
  CHECK(line_of("name,error_rate,avg_latency\nlogin,1.0,100\nbad,abc,50\n") == 3);
  CHECK(line_of("name,error_rate,avg_latency\nlogin,1.0\n") == 2);
  CHECK(line_of("name,error_rate,avg_latency\nlogin,-1.0,100\n") == 2);
  CHECK(line_of("") == 0);  // empty file: no line to blame
  CHECK(line_of("name,error_rate,avg_latency\nok,1.0,100\n") == -1);
}

TEST_CASE("comparing sync against async runs") {
  LoadReport sync_r = report_of("peak", 31.2, 1800.0);
  LoadReport async_r = report_of("peak", 0.5, 420.0);

  Json cmp = compare_modes(sync_r, async_r);
  CHECK(cmp.at("scenario") == "peak");
  CHECK(cmp.at("error_rate_ratio").get<double>() == doctest::Approx(62.4));
  CHECK(cmp.at("async_superior") == true);
  CHECK(cmp.at("sync").at("verdict") == "FAIL");
  CHECK(cmp.at("async").at("verdict") == "PASS");

  SUBCASE("mismatched scenarios refuse to compare") {
    LoadReport other = report_of("other", 1.0, 100.0);
    CHECK_THROWS_AS(compare_modes(sync_r, other), ScenarioMismatchError);
  }
  SUBCASE("ratio diverges when only async is clean") {
    Json j = compare_modes(report_of("peak", 10.0, 500.0), report_of("peak", 0.0, 400.0));
    CHECK(j.at("error_rate_ratio").is_null());
    CHECK(j.at("async_superior") == true);
  }
  SUBCASE("both clean means ratio one, latency breaks the tie") {
    Json j = compare_modes(report_of("peak", 0.0, 300.0), report_of("peak", 0.0, 200.0));
    CHECK(j.at("error_rate_ratio").get<double>() == doctest::Approx(1.0));
    CHECK(j.at("async_superior") == true);
    Json j2 = compare_modes(report_of("peak", 0.0, 200.0), report_of("peak", 0.0, 300.0));
    CHECK(j2.at("async_superior") == false);
  }
}

TEST_CASE("a live closed-loop run produces a calibrated report") {
  StubServer server;
  server.set_handler([](const std::string& method, const std::string& target,
                        const std::string&) {
    if (method == "POST" && target == "/auth/login")
      return StubReply{200, R"({"token":"stub-token"})"};
    return StubReply{200, R"({"items":[]})"};
  });
  server.set_delay_ms(50);
  REQUIRE(server.start());

  Scenario s;
  s.name = "calibration";
  s.method = "GET";
  s.path = "/activities";
  s.ramp = {{5, 2}};
  s.request_timeout_ms = 5000;

  std::vector<Credential> creds = {{"a@x.test", "pw"}, {"b@x.test", "pw"}};
  RunResult run = run_scenario(s, "http://127.0.0.1:" + std::to_string(server.port()), creds);
  server.stop();

  const LoadReport& r = run.report;
  CHECK(r.scenario == "calibration");
  CHECK(r.total > 5);               // 5 VUs x ~2s / ~50ms each
  CHECK(r.failures == 0);
  CHECK(r.error_rate_pct == 0.0);
  // every request waits out the stub's 50ms handling delay
  CHECK(r.avg_latency_ms >= 45.0);
  CHECK(r.avg_latency_ms <= 1000.0);
  CHECK(r.p95_latency_ms >= r.avg_latency_ms * 0.5);
  CHECK(r.duration_s >= 2.0);
  CHECK(r.verdict == "PASS");
  CHECK(static_cast<std::int64_t>(run.samples.size()) == r.total);

  // samples come back merged and ordered by start time
  for (std::size_t i = 1; i < run.samples.size(); ++i)
    CHECK(run.samples[i - 1].start_ms <= run.samples[i].start_ms);

  SUBCASE("writers persist what the run measured") {
    TempDir tmp;
    write_samples_csv(tmp.path / "samples.csv", run.samples);
    write_report_json(tmp.path / "report.json", r);

    std::ifstream csv(tmp.path / "samples.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "start_ms,latency_ms,status,ok");
    std::int64_t rows = 0;
    std::string line;
    while (std::getline(csv, line))
      if (!line.empty()) ++rows;
    CHECK(rows == r.total);

    std::ifstream json_in(tmp.path / "report.json");
    Json parsed = Json::parse(json_in);
    LoadReport back = parsed.get<LoadReport>();
    CHECK(back.scenario == r.scenario);
    CHECK(back.total == r.total);
    CHECK(back.verdict == r.verdict);
    CHECK(back.avg_latency_ms == doctest::Approx(r.avg_latency_ms));
  }
}

TEST_CASE("server errors are counted against the error budget") {
  StubServer server;
  std::atomic<int> n{0};
  server.set_handler([&n](const std::string& method, const std::string& target,
                          const std::string&) {
    if (method == "POST" && target == "/auth/login")
      return StubReply{200, R"({"token":"stub-token"})"};
    // every 20th data request blows up
    if (n.fetch_add(1) % 20 == 19) return StubReply{500, R"({"error":"internal"})"};
    return StubReply{200, "{}"};
  });
  REQUIRE(server.start());

  Scenario s;
  s.name = "flaky";
  s.method = "GET";
  s.path = "/records";  // /healthz never reaches the handler, data paths do
  s.ramp = {{4, 2}};
  std::vector<Credential> creds = {{"a@x.test", "pw"}};
  RunResult run = run_scenario(s, "http://127.0.0.1:" + std::to_string(server.port()), creds);
  server.stop();

  CHECK(run.report.total > 50);
  CHECK(run.report.failures > 0);
  CHECK(run.report.error_rate_pct > 2.0);
  CHECK(run.report.error_rate_pct < 8.0);
}

TEST_CASE("a dead target aborts instead of reporting a fake run") {
  Scenario s;
  s.name = "dead";
  s.ramp = {{2, 1}};
  std::vector<Credential> creds = {{"a@x.test", "pw"}};
  CHECK_THROWS_AS(run_scenario(s, "http://127.0.0.1:9", creds), AbortedRunError);
  CHECK_THROWS_AS(run_scenario(s, "http://127.0.0.1:9", {}), AbortedRunError);
}

}  // TEST_SUITE

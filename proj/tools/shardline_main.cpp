#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include "shardline/deployment.hpp"
#include "shardline/errors.hpp"
#include "shardline/loadgen.hpp"

namespace {

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop.store(true); }

using namespace shardline;

std::shared_ptr<ShardedStore> open_store(const DeploymentConfig& cfg) {
  auto directory =
      std::make_shared<ShardDirectory>(cfg.shard_map(), cfg.auto_extend_shards);
  return std::make_shared<ShardedStore>(cfg.data_dir, directory, cfg.pool_max_connections,
                                        cfg.pool_acquire_timeout_ms);
}

int cmd_serve(const std::string& config_flag, const std::string& role_name, int index) {
  auto role = role_from_string(role_name);
  if (!role) {
    std::fprintf(stderr, "unknown role '%s'\n", role_name.c_str());
    return 2;
  }
  DeploymentConfig cfg = resolve_config(config_flag);
  Deployment deployment(cfg);
  deployment.start(*role, index);

  std::printf("role=%s index=%d data_dir=%s mode=%s\n", to_string(*role).c_str(), index,
              cfg.data_dir.c_str(), to_string(cfg.prediction_mode).c_str());
  if (*role == Role::all_in_one || *role == Role::gateway)
    std::printf("gateway listening on http://%s:%d\n", cfg.gateway_host.c_str(),
                deployment.gateway_port());
  for (int p : deployment.backend_ports()) std::printf("backend listening on port %d\n", p);
  for (int p : deployment.predictor_ports())
    std::printf("predictor listening on port %d\n", p);
  std::fflush(stdout);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  deployment.stop();
  std::printf("stopped\n");
  return 0;
}

int cmd_seed(const std::string& config_flag, int users, int activities_per_user,
             std::uint64_t seed, std::string credentials_out) {
  DeploymentConfig cfg = resolve_config(config_flag);
  if (data_dir_is_dirty(cfg.data_dir)) {
    std::fprintf(stderr,
                 "refusing to seed: %s already holds data (delete it first)\n",
                 cfg.data_dir.c_str());
    return 1;
  }
  auto store = open_store(cfg);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> age_d(18, 90), chol_d(100, 300), smoke_d(0, 40);
  std::uniform_int_distribution<int> bmi_tenths_d(150, 450), coin(0, 1);
  std::uniform_int_distribution<int> cigs_d(0, 30), sessions_d(0, 14);
  std::uniform_int_distribution<std::uint64_t> pw_d;

  std::vector<NewUser> batch;
  std::vector<std::string> passwords;
  const Millis now = system_now_ms();
  for (int k = 1; k <= users; ++k) {
    char pw[32];
    std::snprintf(pw, sizeof pw, "pw-%016llx",
                  static_cast<unsigned long long>(pw_d(rng)));
    passwords.emplace_back(pw);
    NewUser nu;
    nu.email = "user" + std::to_string(k) + "@shardline.test";
    nu.password_hash = hash_password(passwords.back());
    nu.display_name = "User " + std::to_string(k);
    nu.verified = true;  // seeded accounts can log in immediately
    nu.created_at = now;
    batch.push_back(std::move(nu));
  }
  std::vector<UserRecord> created = store->bulk_register(batch);

  std::vector<ProfileRecord> profiles;
  std::vector<ActivityRecord> activities;
  for (const auto& u : created) {
    ProfileRecord p;
    p.user_id = u.id;
    p.age = age_d(rng);
    p.bmi = bmi_tenths_d(rng) / 10.0;
    p.cholesterol_level = chol_d(rng);
    p.hypertension = coin(rng) == 1;
    p.macrosomic_baby_history = coin(rng) == 1;
    p.family_history_diabetes = coin(rng) == 1;
    p.smoking_years = smoke_d(rng);
    p.updated_at = now;
    profiles.push_back(p);
    for (int a = 0; a < activities_per_user; ++a) {
      ActivityRecord act;
      act.user_id = u.id;
      act.kind = (a % 2 == 0) ? ActivityKind::smoking : ActivityKind::exercise;
      act.quantity = act.kind == ActivityKind::smoking ? cigs_d(rng) : sessions_d(rng);
      act.recorded_at = now - static_cast<Millis>(a) * 86400000;
      activities.push_back(act);
    }
  }
  store->bulk_insert_fixtures(profiles, activities);
  store->checkpoint_all();

  if (credentials_out.empty())
    credentials_out = (std::filesystem::path(cfg.data_dir) / "credentials.csv").string();
  std::ofstream creds(credentials_out, std::ios::trunc);
  if (!creds) {
    std::fprintf(stderr, "cannot write %s\n", credentials_out.c_str());
    return 1;
  }
  creds << "user_id,email,password\n";
  for (std::size_t i = 0; i < created.size(); ++i)
    creds << created[i].id << ',' << created[i].email << ',' << passwords[i] << '\n';
  creds.close();

  auto counts = store->census();
  std::printf("seeded %zu users (%d activities each) into %s\n", created.size(),
              activities_per_user, cfg.data_dir.c_str());
  for (std::size_t s = 0; s < counts.size(); ++s)
    std::printf("shard %zu: %lld users\n", s, static_cast<long long>(counts[s]));
  std::printf("credentials: %s\n", credentials_out.c_str());
  return 0;
}

int cmd_loadtest(const std::string& scenario_path, const std::string& target,
                 const std::string& out_dir, const std::string& credentials_path) {
  Scenario scenario = load_scenario_file(scenario_path);
  auto credentials = read_credentials_csv(credentials_path);
  std::printf("scenario '%s': %s %s, peak %d VUs for %ds against %s\n",
              scenario.name.c_str(), scenario.method.c_str(), scenario.path.c_str(),
              scenario.peak_vus(), scenario.total_duration_s(), target.c_str());
  std::fflush(stdout);

  RunResult result = run_scenario(scenario, target, credentials);

  std::filesystem::create_directories(out_dir);
  write_samples_csv(std::filesystem::path(out_dir) / "samples.csv", result.samples);
  write_report_json(std::filesystem::path(out_dir) / "report.json", result.report);

  const LoadReport& r = result.report;
  std::printf("%s: %lld requests, %.2f%% errors, avg %.1f ms, p95 %.1f ms, %.1f rps\n",
              r.scenario.c_str(), static_cast<long long>(r.total), r.error_rate_pct,
              r.avg_latency_ms, r.p95_latency_ms, r.rps);
  std::printf("verdict: %s\n", r.verdict.c_str());
  return 0;
}

int cmd_replay(const std::string& metrics_path) {
  ReplaySummary summary = replay_metrics_csv(metrics_path);
  for (const auto& row : summary.rows)
    std::printf("%-40s %7.2f%% %9.1f ms  %s\n", row.name.c_str(), row.error_rate_pct,
                row.avg_latency_ms, row.verdict.c_str());
  std::printf("%d PASS, %d PARTIAL, %d FAIL of %zu rows\n", summary.pass, summary.partial,
              summary.fail, summary.rows.size());
  return summary.fail == 0 ? 0 : 1;
}

int cmd_compare(const std::string& sync_path, const std::string& async_path) {
  std::ifstream sync_in(sync_path), async_in(async_path);
  if (!sync_in || !async_in) {
    std::fprintf(stderr, "cannot open report files\n");
    return 1;
  }
  LoadReport sync_report = Json::parse(sync_in).get<LoadReport>();
  LoadReport async_report = Json::parse(async_in).get<LoadReport>();
  Json verdict = compare_modes(sync_report, async_report);
  std::printf("%s\n", verdict.dump(2).c_str());
  return 0;
}

int cmd_census(const std::string& config_flag, bool verify) {
  DeploymentConfig cfg = resolve_config(config_flag);
  auto store = open_store(cfg);
  auto counts = store->census();
  std::int64_t total = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    std::printf("shard %zu: %lld users\n", s, static_cast<long long>(counts[s]));
    total += counts[s];
  }
  std::printf("total: %lld users across %zu shards\n", static_cast<long long>(total),
              counts.size());
  if (verify) {
    PlacementReport report = store->verify_placement();
    std::printf("placement: %lld records checked, %zu violations\n",
                static_cast<long long>(report.records_checked), report.violations.size());
    for (const auto& v : report.violations) std::printf("  %s\n", v.c_str());
    return report.ok() ? 0 : 1;
  }
  return 0;
}

int cmd_queues(const std::string& config_flag) {
  DeploymentConfig cfg = resolve_config(config_flag);
  Broker broker(std::filesystem::path(cfg.data_dir) / "queues");
  auto names = broker.queue_names();
  if (names.empty()) {
    std::printf("no queues on disk under %s\n", cfg.data_dir.c_str());
    return 0;
  }
  std::printf("%-32s %8s %8s %8s %6s %10s\n", "queue", "pending", "unacked", "acked",
              "dead", "published");
  for (const auto& name : names) {
    broker.declare_queue(name);
    QueueDepths d = broker.depths(name);
    std::printf("%-32s %8lld %8lld %8lld %6lld %10lld\n", name.c_str(),
                static_cast<long long>(d.pending), static_cast<long long>(d.unacked),
                static_cast<long long>(d.acked), static_cast<long long>(d.dead),
                static_cast<long long>(d.published));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shardline: sharded prediction back-end testbed"};
  app.require_subcommand(1);
  std::string config_flag;
  app.add_option("--config", config_flag, "path to a deployment config JSON")
      ->envname("SHARDLINE_CONFIG");

  auto* serve = app.add_subcommand("serve", "run one role of the deployment");
  std::string role = "all-in-one";
  int index = 0;
  serve->add_option("--role", role, "gateway | backend | predictor | all-in-one");
  serve->add_option("--index", index, "which configured instance this process is");

  auto* seed = app.add_subcommand("seed", "populate a fresh data directory");
  int users = 1000, activities_per_user = 2;
  std::uint64_t rng_seed = 42;
  std::string credentials_out;
  seed->add_option("--users", users, "how many users to create")->required();
  seed->add_option("--activities-per-user", activities_per_user, "fixture activities per user");
  seed->add_option("--seed", rng_seed, "RNG seed for deterministic fixtures");
  seed->add_option("--credentials-out", credentials_out, "where to write credentials.csv");

  auto* loadtest = app.add_subcommand("loadtest", "run a closed-loop load scenario");
  std::string scenario_path, target = "http://127.0.0.1:8080", out_dir = "./loadtest-out";
  std::string credentials_path;
  loadtest->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  loadtest->add_option("--target", target, "base URL of the gateway");
  loadtest->add_option("--out", out_dir, "directory for samples.csv and report.json");
  loadtest->add_option("--credentials", credentials_path, "credentials.csv from seed")
      ->required();

  auto* replay = app.add_subcommand("replay", "re-classify captured run metrics");
  std::string metrics_path;
  replay->add_option("--metrics", metrics_path, "CSV: name,error_rate,avg_latency")
      ->required();

  auto* compare = app.add_subcommand("compare", "compare sync and async run reports");
  std::string sync_path, async_path;
  compare->add_option("--sync", sync_path, "report.json from the sync run")->required();
  compare->add_option("--async", async_path, "report.json from the async run")->required();

  auto* census = app.add_subcommand("census", "per-shard user counts");
  bool verify = false;
  census->add_flag("--verify", verify, "also verify record placement against the shard map");

  app.add_subcommand("queues", "broker queue depths");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("serve")) return cmd_serve(config_flag, role, index);
    if (app.got_subcommand("seed"))
      return cmd_seed(config_flag, users, activities_per_user, rng_seed, credentials_out);
    if (app.got_subcommand("loadtest"))
      return cmd_loadtest(scenario_path, target, out_dir, credentials_path);
    if (app.got_subcommand("replay")) return cmd_replay(metrics_path);
    if (app.got_subcommand("compare")) return cmd_compare(sync_path, async_path);
    if (app.got_subcommand("census")) return cmd_census(config_flag, verify);
    if (app.got_subcommand("queues")) return cmd_queues(config_flag);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

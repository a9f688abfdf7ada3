#include "shardline/api.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <thread>
#include <unordered_map>

#include "shardline/errors.hpp"
#include "shardline/http_client.hpp"
#include "shardline/ids.hpp"

namespace shardline {

namespace {

Json user_public_json(const UserRecord& u) {
  // password_hash never leaves the store
  return Json{{"id", u.id},
              {"email", u.email},
              {"display_name", u.display_name},
              {"verified", u.verified},
              {"created_at", u.created_at}};
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  send_json(res, status, Json{{"error", code}, {"message", message}});
}

void send_validation_errors(httplib::Response& res,
                            const std::vector<ValidationError>& errors) {
  Json fields = Json::array();
  for (const auto& e : errors) fields.push_back({{"field", e.field}, {"allowed", e.allowed}});
  send_json(res, 422,
            Json{{"error", "validation_failed"},
                 {"message", "one or more fields are invalid"},
                 {"fields", fields}});
}

std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
  Json j = Json::parse(req.body.empty() ? "{}" : req.body, nullptr,
                       /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    send_error(res, 400, "bad_json", "request body is not valid JSON");
    return std::nullopt;
  }
  return j;
}

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Json records_json(const std::vector<PredictionRecord>& items) {
  Json arr = Json::array();
  for (const auto& p : items) arr.push_back(Json(p));
  return Json{{"items", arr}, {"total", items.size()}};
}

Json job_status_json(const PredictionJob& job) {
  Json j = {{"correlation_id", job.correlation_id},
            {"status", to_string(job.status)},
            {"submitted_at", job.submitted_at}};
  if (job.completed_at) j["completed_at"] = *job.completed_at;
  if (job.error_detail) j["error"] = *job.error_detail;
  return j;
}

// The seven writable profile fields, i.e. the legal what-if override keys.
const std::vector<std::string>& profile_field_names() {
  static const std::vector<std::string> names = {
      "age",       "bmi",           "cholesterol_level",     "hypertension",
      "macrosomic_baby_history",    "family_history_diabetes", "smoking_years"};
  return names;
}

Json profile_fields_json(const ProfileRecord& p) {
  return Json{{"age", p.age},
              {"bmi", p.bmi},
              {"cholesterol_level", p.cholesterol_level},
              {"hypertension", p.hypertension},
              {"macrosomic_baby_history", p.macrosomic_baby_history},
              {"family_history_diabetes", p.family_history_diabetes},
              {"smoking_years", p.smoking_years}};
}

}  // namespace

struct ApiMetrics {
  std::atomic<std::int64_t> requests{0};
  std::atomic<std::int64_t> failures_5xx{0};
  std::atomic<std::int64_t> cache_hits{0};
  std::atomic<std::int64_t> cache_misses{0};
  std::atomic<std::int64_t> jobs_submitted{0};
  std::atomic<std::int64_t> responses_consumed{0};
  std::atomic<std::int64_t> sync_predictions{0};

  ApiMetricsSnapshot snapshot() const {
    ApiMetricsSnapshot s;
    s.requests = requests.load();
    s.failures_5xx = failures_5xx.load();
    s.cache_hits = cache_hits.load();
    s.cache_misses = cache_misses.load();
    s.jobs_submitted = jobs_submitted.load();
    s.responses_consumed = responses_consumed.load();
    s.sync_predictions = sync_predictions.load();
    return s;
  }
};

Json ApiMetricsSnapshot::to_json() const {
  return Json{{"requests", requests},
              {"failures_5xx", failures_5xx},
              {"cache_hits", cache_hits},
              {"cache_misses", cache_misses},
              {"jobs_submitted", jobs_submitted},
              {"responses_consumed", responses_consumed},
              {"sync_predictions", sync_predictions}};
}

struct ApiServer::Impl {
  Impl(std::string n, ApiContext c, int t) : name(std::move(n)), ctx(std::move(c)), threads(t) {}

  const std::string name;
  ApiContext ctx;
  const int threads;

  httplib::Server server;
  std::thread server_thread;
  std::string host = "127.0.0.1";
  int port = 0;
  std::atomic<bool> running{false};
  ApiMetrics metrics;
  std::unique_ptr<Subscription> response_consumer;
  std::atomic<std::uint64_t> predictor_rr{0};

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  Handler wrap(Handler h);
  std::optional<UserId> authenticate(const httplib::Request& req, httplib::Response& res);
  void install_routes();
  FeatureVector features_for(UserId uid, const ProfileRecord& profile);
  void handle_post_prediction(UserId uid, httplib::Response& res);
  void consume_response(const Envelope& env);
  // status/result share the ownership rules: 404 unknown, 403 foreign
  std::optional<PredictionJob> lookup_job(UserId uid, const std::string& cid,
                                          httplib::Response& res);
};

ApiServer::Impl::Handler ApiServer::Impl::wrap(Handler h) {
  return [this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const PoolTimeoutError& e) {
      send_error(res, 503, "pool_timeout", e.what());
    } catch (const PoolClosedError& e) {
      send_error(res, 503, "shutting_down", e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const DuplicateKeyError& e) {
      send_error(res, 409, "duplicate", e.what());
    } catch (const InvalidRangeError& e) {
      send_error(res, 400, "invalid_range", e.what());
    } catch (const MissingProfileError& e) {
      send_error(res, 409, "missing_profile", e.what());
    } catch (const UnmappedIdError& e) {
      send_error(res, 503, "no_shard_capacity", e.what());
    } catch (const OverloadedError& e) {
      send_error(res, 503, "overloaded", e.what());
    } catch (const UnknownQueueError& e) {
      send_error(res, 503, "broker_unavailable", e.what());
    } catch (const Json::exception& e) {
      send_error(res, 400, "bad_payload", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::optional<UserId> ApiServer::Impl::authenticate(const httplib::Request& req,
                                                    httplib::Response& res) {
  const std::string header = req.get_header_value("Authorization");
  constexpr const char* kPrefix = "Bearer ";
  if (header.rfind(kPrefix, 0) != 0) {
    send_error(res, 401, "unauthorized", "missing bearer token");
    return std::nullopt;
  }
  auto uid = ctx.signer->verify(header.substr(std::string(kPrefix).size()));
  if (!uid) {
    send_error(res, 401, "unauthorized", "invalid or expired token");
    return std::nullopt;
  }
  return uid;
}

FeatureVector ApiServer::Impl::features_for(UserId uid, const ProfileRecord& profile) {
  auto page = ctx.store->list_activities(uid, std::nullopt, 0, -1);
  return normalize_features(profile, page.items);
}

void ApiServer::Impl::handle_post_prediction(UserId uid, httplib::Response& res) {
  auto profile = ctx.store->get_profile(uid);
  if (!profile) throw MissingProfileError("user has no profile to predict from");
  const FeatureVector features = features_for(uid, *profile);

  if (ctx.mode == PredictionMode::async) {
    const std::string cid = new_correlation_id();
    PredictionJob job;
    job.correlation_id = cid;
    job.user_id = uid;
    job.status = JobStatus::pending;
    job.submitted_at = ctx.clock->now_ms();
    ctx.store->put_job(job);
    ctx.broker->publish(kRequestQueue, cid, make_prediction_request(cid, uid, features));
    ctx.store->mark_job_processing(uid, cid);
    metrics.jobs_submitted.fetch_add(1);
    send_json(res, 202,
              Json{{"correlation_id", cid},
                   {"status", "pending"},
                   {"poll", "/predictions/jobs/" + cid + "/status"}});
    return;
  }

  // Sync mode: block on the predictor RPC and return the stored record.
  if (ctx.predictors.empty())
    throw OverloadedError("no predictor endpoints configured for sync mode");
  const auto& target =
      ctx.predictors[predictor_rr.fetch_add(1) % ctx.predictors.size()];
  thread_local std::unordered_map<std::string, std::unique_ptr<HttpClient>> clients;
  const std::string key = target.host + ":" + std::to_string(target.port);
  auto& client = clients[key];
  if (!client) client = std::make_unique<HttpClient>(target.host, target.port,
                                                     ctx.sync_call_timeout_ms);
  Json rpc = {{"user_id", uid}, {"features", Json(features)}};
  HttpResponse upstream = client->post("/predict", rpc.dump());
  if (!upstream.transport_ok()) {
    clients.erase(key);  // drop the broken connection
    send_error(res, 503, "predictor_unreachable", upstream.error);
    return;
  }
  if (upstream.status == 503) {
    send_error(res, 503, "overloaded", "prediction service rejected the request");
    return;
  }
  if (upstream.status != 200) {
    send_error(res, 502, "predictor_error",
               "unexpected predictor status " + std::to_string(upstream.status));
    return;
  }
  Json body = Json::parse(upstream.body, nullptr, /*allow_exceptions=*/false);
  if (body.is_discarded()) {
    send_error(res, 502, "predictor_error", "predictor returned malformed JSON");
    return;
  }
  PredictionRecord rec = body.get<PredictionRecord>();
  rec.user_id = uid;
  const Millis now = ctx.clock->now_ms();
  rec.created_at = now;
  rec.updated_at = now;
  PredictionRecord stored = ctx.store->create_prediction(rec);
  metrics.sync_predictions.fetch_add(1);
  send_json(res, 200, Json(stored));
}

std::optional<PredictionJob> ApiServer::Impl::lookup_job(UserId uid, const std::string& cid,
                                                         httplib::Response& res) {
  auto job = ctx.store->get_job(uid, cid);
  if (!job) job = ctx.store->find_job(cid);
  if (!job) {
    send_error(res, 404, "not_found", "unknown correlation id");
    return std::nullopt;
  }
  if (job->user_id != uid) {
    send_error(res, 403, "forbidden", "job belongs to another user");
    return std::nullopt;
  }
  return job;
}

void ApiServer::Impl::consume_response(const Envelope& env) {
  const Json& payload = env.payload;
  const std::string cid = payload.value("correlation_id", env.correlation_id);
  const UserId uid = payload.value("user_id", 0LL);
  const Millis now = ctx.clock->now_ms();
  if (payload.contains("record")) {
    PredictionRecord rec = payload.at("record").get<PredictionRecord>();
    ctx.store->complete_job(uid, cid, rec, now);  // duplicates absorbed inside
  } else {
    ctx.store->fail_job(uid, cid, payload.value("error", "prediction failed"), now);
  }
  metrics.responses_consumed.fetch_add(1);
}

void ApiServer::Impl::install_routes() {
  auto& s = server;

  s.Get("/healthz", wrap([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200,
              Json{{"status", "ok"}, {"instance", name}, {"mode", to_string(ctx.mode)}});
  }));

  s.Get("/metrics", wrap([this](const httplib::Request&, httplib::Response& res) {
    Json j = metrics.snapshot().to_json();
    auto cs = ctx.cache->stats();
    j["cache"] = {{"hits", cs.hits},
                  {"misses", cs.misses},
                  {"entries", cs.entries},
                  {"evictions", cs.evictions}};
    Json pools = Json::array();
    auto map = ctx.store->directory()->snapshot();
    for (int i = 0; i < map.shard_count(); ++i) {
      auto& p = ctx.store->pool(i);
      pools.push_back({{"shard", i},
                       {"max_connections", p.max_connections()},
                       {"in_use", p.in_use()},
                       {"high_water", p.high_water()},
                       {"timeouts", p.timeouts()}});
    }
    j["pools"] = pools;
    send_json(res, 200, j);
  }));

  // --- auth ---------------------------------------------------------------

  s.Post("/auth/register", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    const std::string email = lowercase(body->value("email", ""));
    const std::string password = body->value("password", "");
    std::vector<ValidationError> errors;
    if (email.find('@') == std::string::npos)
      errors.push_back({"email", "address containing '@'"});
    if (password.size() < 6) errors.push_back({"password", "at least 6 characters"});
    if (!errors.empty()) return send_validation_errors(res, errors);
    NewUser nu;
    nu.email = email;
    nu.password_hash = hash_password(password);
    nu.display_name = body->value("display_name", email.substr(0, email.find('@')));
    nu.verified = false;
    nu.created_at = ctx.clock->now_ms();
    UserRecord created = ctx.store->register_user(nu);
    send_json(res, 201, user_public_json(created));
  }));

  s.Post("/auth/login", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    const std::string email = lowercase(body->value("email", ""));
    const std::string password = body->value("password", "");
    auto user = ctx.store->find_user_by_email(email);
    if (!user || !verify_password(password, user->password_hash))
      return send_error(res, 401, "bad_credentials", "email or password is wrong");
    if (!user->verified)
      return send_error(res, 403, "unverified", "account has not been verified");
    send_json(res, 200,
              Json{{"token", ctx.signer->issue(user->id)}, {"user", user_public_json(*user)}});
  }));

  // Minimal stand-ins for the verification/reset entities: no email leaves
  // the system, the route just flips the stored state.
  s.Post("/auth/verify", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    auto user = ctx.store->find_user_by_email(lowercase(body->value("email", "")));
    if (!user) return send_error(res, 404, "not_found", "no such account");
    auto updated = ctx.store->mutate_user(user->id, [](UserRecord& u) { u.verified = true; });
    send_json(res, 200, Json{{"verified", updated.verified}});
  }));

  s.Post("/auth/reset-password",
         wrap([this](const httplib::Request& req, httplib::Response& res) {
           auto body = parse_body(req, res);
           if (!body) return;
           const std::string password = body->value("new_password", "");
           if (password.size() < 6)
             return send_validation_errors(res, {{"new_password", "at least 6 characters"}});
           auto user = ctx.store->find_user_by_email(lowercase(body->value("email", "")));
           if (!user) return send_error(res, 404, "not_found", "no such account");
           ctx.store->mutate_user(user->id, [&](UserRecord& u) {
             u.password_hash = hash_password(password);
           });
           send_json(res, 200, Json{{"reset", true}});
         }));

  // --- users --------------------------------------------------------------

  s.Get("/users/me", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    send_json(res, 200, user_public_json(ctx.store->get_user(*uid)));
  }));

  s.Put("/users/me", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto body = parse_body(req, res);
    if (!body) return;
    const std::string email = lowercase(body->value("email", ""));
    const std::string display_name = body->value("display_name", "");
    std::vector<ValidationError> errors;
    if (email.find('@') == std::string::npos)
      errors.push_back({"email", "address containing '@'"});
    if (display_name.empty()) errors.push_back({"display_name", "non-empty string"});
    if (!errors.empty()) return send_validation_errors(res, errors);
    UserRecord current = ctx.store->get_user(*uid);
    if (email != current.email) ctx.store->change_email(*uid, email);
    auto updated =
        ctx.store->mutate_user(*uid, [&](UserRecord& u) { u.display_name = display_name; });
    send_json(res, 200, user_public_json(updated));
  }));

  s.Patch("/users/me", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto body = parse_body(req, res);
    if (!body) return;
    auto updated = ctx.store->mutate_user(*uid, [&](UserRecord& u) {
      if (body->contains("display_name")) u.display_name = body->at("display_name").get<std::string>();
    });
    send_json(res, 200, user_public_json(updated));
  }));

  // --- profile --------------------------------------------------------------

  s.Get("/users/me/profile", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto profile = ctx.store->get_profile(*uid);
    if (!profile) return send_error(res, 404, "not_found", "no profile yet");
    send_json(res, 200, Json(*profile));
  }));

  s.Post("/users/me/profile", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto body = parse_body(req, res);
    if (!body) return;
    auto validation = validate_profile(*body);
    if (!validation.ok()) return send_validation_errors(res, validation.errors);
    ProfileRecord rec = *validation.record;
    rec.user_id = *uid;
    rec.updated_at = ctx.clock->now_ms();
    ctx.store->create_profile(rec);
    ctx.cache->invalidate(*uid);
    send_json(res, 201, Json(rec));
  }));

  s.Put("/users/me/profile", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto body = parse_body(req, res);
    if (!body) return;
    auto validation = validate_profile(*body);
    if (!validation.ok()) return send_validation_errors(res, validation.errors);
    ProfileRecord rec = *validation.record;
    rec.user_id = *uid;
    rec.updated_at = ctx.clock->now_ms();
    ctx.store->upsert_profile(rec);
    ctx.cache->invalidate(*uid);
    send_json(res, 200, Json(rec));
  }));

  s.Delete("/users/me/profile",
           wrap([this](const httplib::Request& req, httplib::Response& res) {
             auto uid = authenticate(req, res);
             if (!uid) return;
             if (!ctx.store->delete_profile(*uid))
               return send_error(res, 404, "not_found", "no profile to delete");
             ctx.cache->invalidate(*uid);
             res.status = 204;
           }));

  // --- activities -----------------------------------------------------------

  auto parse_kind = [](const httplib::Request& req, httplib::Response& res,
                       std::optional<ActivityKind>& out) {
    if (!req.has_param("kind")) return true;
    auto kind = activity_kind_from_string(req.get_param_value("kind"));
    if (!kind) {
      send_validation_errors(res, {{"kind", "one of: smoking, exercise"}});
      return false;
    }
    out = kind;
    return true;
  };

  s.Get("/activities", wrap([this, parse_kind](const httplib::Request& req,
                                               httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    std::optional<ActivityKind> kind;
    if (!parse_kind(req, res, kind)) return;
    std::int64_t offset = 0, limit = 50;
    try {
      if (req.has_param("offset")) offset = std::stoll(req.get_param_value("offset"));
      if (req.has_param("limit")) limit = std::stoll(req.get_param_value("limit"));
    } catch (const std::exception&) {
      return send_validation_errors(res, {{"offset/limit", "integer"}});
    }
    if (limit > 500) limit = 500;
    auto page = ctx.store->list_activities(*uid, kind, offset, limit);
    Json items = Json::array();
    for (const auto& a : page.items) items.push_back(Json(a));
    send_json(res, 200,
              Json{{"items", items}, {"total", page.total}, {"offset", offset}, {"limit", limit}});
  }));

  s.Get("/activities/count", wrap([this, parse_kind](const httplib::Request& req,
                                                     httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    std::optional<ActivityKind> kind;
    if (!parse_kind(req, res, kind)) return;
    auto page = ctx.store->list_activities(*uid, kind, 0, 0);
    send_json(res, 200, Json{{"count", page.total}});
  }));

  s.Get(R"(/activities/(\d+))", wrap([this](const httplib::Request& req,
                                            httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto rec = ctx.store->get_activity(*uid, std::stoll(req.matches[1].str()));
    if (!rec) return send_error(res, 404, "not_found", "no such activity");
    send_json(res, 200, Json(*rec));
  }));

  auto parse_activity = [this](const Json& body, httplib::Response& res)
      -> std::optional<ActivityRecord> {
    std::vector<ValidationError> errors;
    auto kind = activity_kind_from_string(body.value("kind", ""));
    if (!kind) errors.push_back({"kind", "one of: smoking, exercise"});
    std::int64_t quantity = -1;
    if (!body.contains("quantity") || !body.at("quantity").is_number_integer() ||
        (quantity = body.at("quantity").get<std::int64_t>()) < 0 || quantity > 1000)
      errors.push_back({"quantity", "integer in [0, 1000]"});
    if (!errors.empty()) {
      send_validation_errors(res, errors);
      return std::nullopt;
    }
    ActivityRecord rec;
    rec.kind = *kind;
    rec.quantity = quantity;
    rec.recorded_at = body.value("recorded_at", ctx.clock->now_ms());
    return rec;
  };

  s.Post("/activities", wrap([this, parse_activity](const httplib::Request& req,
                                                    httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto body = parse_body(req, res);
    if (!body) return;
    auto rec = parse_activity(*body, res);
    if (!rec) return;
    rec->user_id = *uid;
    auto stored = ctx.store->create_activity(*rec);
    ctx.cache->invalidate(*uid);
    send_json(res, 201, Json(stored));
  }));

  s.Put(R"(/activities/(\d+))", wrap([this, parse_activity](const httplib::Request& req,
                                                            httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto body = parse_body(req, res);
    if (!body) return;
    auto rec = parse_activity(*body, res);
    if (!rec) return;
    rec->activity_id = std::stoll(req.matches[1].str());
    rec->user_id = *uid;
    if (!ctx.store->update_activity(*uid, *rec))
      return send_error(res, 404, "not_found", "no such activity");
    ctx.cache->invalidate(*uid);
    send_json(res, 200, Json(*rec));
  }));

  s.Delete(R"(/activities/(\d+))", wrap([this](const httplib::Request& req,
                                               httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    if (!ctx.store->delete_activity(*uid, std::stoll(req.matches[1].str())))
      return send_error(res, 404, "not_found", "no such activity");
    ctx.cache->invalidate(*uid);
    res.status = 204;
  }));

  // --- predictions ----------------------------------------------------------

  s.Get("/predictions", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    send_json(res, 200, records_json(ctx.store->list_predictions(*uid)));
  }));

  s.Get("/predictions/by-date", wrap([this](const httplib::Request& req,
                                            httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    if (!req.has_param("from") || !req.has_param("to"))
      return send_validation_errors(res, {{"from/to", "epoch milliseconds, both required"}});
    Millis from = 0, to = 0;
    try {
      from = std::stoll(req.get_param_value("from"));
      to = std::stoll(req.get_param_value("to"));
    } catch (const std::exception&) {
      return send_validation_errors(res, {{"from/to", "epoch milliseconds"}});
    }
    send_json(res, 200, records_json(ctx.store->predictions_by_date(*uid, from, to)));
  }));

  s.Post("/predictions", wrap([this](const httplib::Request& req, httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    handle_post_prediction(*uid, res);
  }));

  s.Get(R"(/predictions/jobs/([0-9a-f]{32})/status)",
        wrap([this](const httplib::Request& req, httplib::Response& res) {
          auto uid = authenticate(req, res);
          if (!uid) return;
          auto job = lookup_job(*uid, req.matches[1].str(), res);
          if (!job) return;
          send_json(res, 200, job_status_json(*job));
        }));

  s.Get(R"(/predictions/jobs/([0-9a-f]{32})/result)",
        wrap([this](const httplib::Request& req, httplib::Response& res) {
          auto uid = authenticate(req, res);
          if (!uid) return;
          auto job = lookup_job(*uid, req.matches[1].str(), res);
          if (!job) return;
          if (job->status != JobStatus::completed || !job->result) {
            Json j = job_status_json(*job);
            if (!j.contains("error")) j["error"] = "result_not_ready";
            return send_json(res, 409, j);
          }
          send_json(res, 200, Json(*job->result));
        }));

  s.Delete(R"(/predictions/(\d+))", wrap([this](const httplib::Request& req,
                                                httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    if (!ctx.store->delete_prediction(*uid, std::stoll(req.matches[1].str())))
      return send_error(res, 404, "not_found", "no such prediction");
    res.status = 204;
  }));

  s.Post("/predictions/what-if", wrap([this](const httplib::Request& req,
                                             httplib::Response& res) {
    auto uid = authenticate(req, res);
    if (!uid) return;
    auto body = parse_body(req, res);
    if (!body) return;
    if (!body->is_object())
      return send_validation_errors(res, {{"", "object of profile field overrides"}});
    const auto& allowed = profile_field_names();
    std::vector<ValidationError> unknown;
    for (const auto& [key, value] : body->items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        unknown.push_back({key, "not an overridable profile field"});
    }
    if (!unknown.empty()) return send_validation_errors(res, unknown);
    auto profile = ctx.store->get_profile(*uid);
    if (!profile) throw MissingProfileError("create a profile before running what-ifs");
    Json merged = profile_fields_json(*profile);
    for (const auto& [key, value] : body->items()) merged[key] = value;
    auto validation = validate_profile(merged);
    if (!validation.ok()) return send_validation_errors(res, validation.errors);
    ProfileRecord hypothetical = *validation.record;
    hypothetical.user_id = *uid;
    const FeatureVector features = features_for(*uid, hypothetical);
    const std::string cache_input = Json(features).dump();
    auto result = ctx.cache->get_or_compute(*uid, cache_input, [&] {
      PredictionRecord rec = ctx.scorer->predict(features);
      rec.user_id = *uid;  // never persisted; ids and timestamps stay zero
      return rec;
    });
    if (result.hit)
      metrics.cache_hits.fetch_add(1);
    else
      metrics.cache_misses.fetch_add(1);
    res.set_header("X-Cache", result.hit ? "hit" : "miss");
    send_json(res, 200, Json(result.value));
  }));
}

ApiServer::ApiServer(std::string instance_name, ApiContext ctx, int http_threads)
    : impl_(std::make_unique<Impl>(std::move(instance_name), std::move(ctx), http_threads)) {}

ApiServer::~ApiServer() { stop(); }

bool ApiServer::start(const std::string& host, int port) {
  auto& im = *impl_;
  if (im.running.load()) return true;
  im.host = host;
  im.server.new_task_queue = [&im] { return new httplib::ThreadPool(im.threads); };
  im.server.set_keep_alive_max_count(1000000);
  // Outlive gateway/client think gaps so idle closes never race reconnects.
  im.server.set_keep_alive_timeout(30);
  im.server.set_tcp_nodelay(true);
  im.server.set_logger([&im](const httplib::Request&, const httplib::Response& res) {
    im.metrics.requests.fetch_add(1);
    if (res.status >= 500) im.metrics.failures_5xx.fetch_add(1);
  });
  im.install_routes();

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

  if (im.ctx.mode == PredictionMode::async && im.ctx.broker) {
    im.ctx.broker->declare_queue(kRequestQueue);
    im.response_consumer = std::make_unique<Subscription>(
        *im.ctx.broker, kResponseQueue, [&im](const Envelope& env) { im.consume_response(env); },
        im.ctx.response_consumer_threads);
  }
  return true;
}

void ApiServer::stop() {
  auto& im = *impl_;
  if (!im.running.exchange(false)) return;
  im.response_consumer.reset();
  im.server.stop();
  if (im.server_thread.joinable()) im.server_thread.join();
}

bool ApiServer::running() const { return impl_->running.load(); }
int ApiServer::port() const { return impl_->port; }
const std::string& ApiServer::host() const { return impl_->host; }
const std::string& ApiServer::name() const { return impl_->name; }
ApiMetricsSnapshot ApiServer::metrics() const { return impl_->metrics.snapshot(); }

}  // namespace shardline

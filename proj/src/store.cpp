#include "shardline/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "shardline/errors.hpp"

namespace shardline {

namespace {
constexpr int kShardBits = 64;

std::filesystem::path shard_dir(const std::filesystem::path& data_dir, int index) {
  return data_dir / "shards" / ("shard-" + std::to_string(index));
}

// Write-then-rename so readers never see a half-written snapshot.
void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw StorageError("open " + tmp.string() + ": " + std::strerror(errno));
    const char* p = content.data();
    size_t left = content.size();
    while (left > 0) {
      ssize_t n = ::write(fd, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        ::close(fd);
        throw StorageError("write " + tmp.string() + ": " + std::strerror(errno));
      }
      p += n;
      left -= static_cast<size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
  }
  std::filesystem::rename(tmp, path);
}
}  // namespace

std::int64_t encode_id(std::int64_t local, int shard_index) {
  return local * kShardBits + shard_index;
}

int shard_of_encoded_id(std::int64_t id) {
  if (id < kShardBits) return -1;  // local part would be zero
  return static_cast<int>(id % kShardBits);
}

std::int64_t local_of_encoded_id(std::int64_t id) { return id / kShardBits; }

// --- ShardStore -----------------------------------------------------------

ShardStore::ShardStore(int shard_index, std::filesystem::path dir)
    : shard_index_(shard_index),
      dir_(std::move(dir)),
      lock_(dir_ / "store.lock"),
      wal_(dir_ / "wal.jsonl") {
  std::lock_guard<std::mutex> g(mu_);
  FileLock::Guard fg(lock_, /*exclusive=*/false);
  reload_locked();
}

void ShardStore::reload_locked() {
  users_.clear();
  email_index_.clear();
  profiles_.clear();
  activities_.clear();
  predictions_.clear();
  jobs_.clear();
  counters_ = {};
  wal_offset_ = 0;
  load_snapshot_locked();
  wal_.read_new_lines(&wal_offset_, [this](const std::string& line) {
    if (line.empty()) return;
    Json rec = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded()) return;  // torn or corrupt line: skip
    apply_locked(rec);
  });
}

void ShardStore::refresh_locked() {
  if (wal_.size() < wal_offset_) {
    // Another process checkpointed and truncated the log under us.
    reload_locked();
    return;
  }
  wal_.read_new_lines(&wal_offset_, [this](const std::string& line) {
    if (line.empty()) return;
    Json rec = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded()) return;
    apply_locked(rec);
  });
}

void ShardStore::load_snapshot_locked() {
  auto path = dir_ / "snapshot.json";
  std::ifstream in(path);
  if (!in) return;
  Json snap = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (snap.is_discarded()) throw StorageError("corrupt snapshot " + path.string());
  counters_.activity = snap.value("counters", Json::object()).value("activity", 0LL);
  counters_.prediction = snap.value("counters", Json::object()).value("prediction", 0LL);
  for (const auto& j : snap.value("users", Json::array())) {
    UserRecord r = j.get<UserRecord>();
    email_index_[r.email] = r.id;
    users_[r.id] = std::move(r);
  }
  for (const auto& j : snap.value("profiles", Json::array())) {
    ProfileRecord r = j.get<ProfileRecord>();
    profiles_[r.user_id] = std::move(r);
  }
  for (const auto& j : snap.value("activities", Json::array())) {
    ActivityRecord r = j.get<ActivityRecord>();
    counters_.activity = std::max(counters_.activity, local_of_encoded_id(r.activity_id));
    activities_[r.activity_id] = std::move(r);
  }
  for (const auto& j : snap.value("predictions", Json::array())) {
    PredictionRecord r = j.get<PredictionRecord>();
    counters_.prediction = std::max(counters_.prediction, local_of_encoded_id(r.prediction_id));
    predictions_[r.prediction_id] = std::move(r);
  }
  for (const auto& j : snap.value("jobs", Json::array())) {
    PredictionJob job = j.get<PredictionJob>();
    jobs_[job.correlation_id] = std::move(job);
  }
}

void ShardStore::apply_locked(const Json& rec) {
  const std::string op = rec.value("o", "");
  if (op == "put") {
    const std::string table = rec.value("t", "");
    const Json& r = rec.at("r");
    if (table == "users") {
      UserRecord u = r.get<UserRecord>();
      auto it = users_.find(u.id);
      if (it != users_.end() && it->second.email != u.email)
        email_index_.erase(it->second.email);
      email_index_[u.email] = u.id;
      users_[u.id] = std::move(u);
    } else if (table == "profiles") {
      ProfileRecord p = r.get<ProfileRecord>();
      profiles_[p.user_id] = std::move(p);
    } else if (table == "activities") {
      ActivityRecord a = r.get<ActivityRecord>();
      counters_.activity = std::max(counters_.activity, local_of_encoded_id(a.activity_id));
      activities_[a.activity_id] = std::move(a);
    } else if (table == "predictions") {
      PredictionRecord p = r.get<PredictionRecord>();
      counters_.prediction = std::max(counters_.prediction, local_of_encoded_id(p.prediction_id));
      predictions_[p.prediction_id] = std::move(p);
    } else if (table == "jobs") {
      PredictionJob j = r.get<PredictionJob>();
      jobs_[j.correlation_id] = std::move(j);
    }
  } else if (op == "del") {
    const std::string table = rec.value("t", "");
    if (table == "users") {
      auto it = users_.find(rec.at("k").get<UserId>());
      if (it != users_.end()) {
        email_index_.erase(it->second.email);
        users_.erase(it);
      }
    } else if (table == "profiles") {
      profiles_.erase(rec.at("k").get<UserId>());
    } else if (table == "activities") {
      activities_.erase(rec.at("k").get<std::int64_t>());
    } else if (table == "predictions") {
      predictions_.erase(rec.at("k").get<std::int64_t>());
    } else if (table == "jobs") {
      jobs_.erase(rec.at("k").get<std::string>());
    }
  } else if (op == "complete") {
    // Job transition and its prediction land atomically from one record.
    PredictionJob j = rec.at("job").get<PredictionJob>();
    jobs_[j.correlation_id] = std::move(j);
    if (rec.contains("pred")) {
      PredictionRecord p = rec.at("pred").get<PredictionRecord>();
      counters_.prediction = std::max(counters_.prediction, local_of_encoded_id(p.prediction_id));
      predictions_[p.prediction_id] = std::move(p);
    }
  }
  // Unknown ops are ignored so older builds can read newer logs.
}

void ShardStore::commit_locked(const Json& rec, bool sync) {
  wal_.append_line(rec.dump(), sync);
  apply_locked(rec);
}

std::int64_t ShardStore::next_activity_id_locked() {
  return encode_id(++counters_.activity, shard_index_);
}

std::int64_t ShardStore::next_prediction_id_locked() {
  return encode_id(++counters_.prediction, shard_index_);
}

void ShardStore::create_user(const UserRecord& r) {
  with_write([&] {
    if (users_.count(r.id)) throw DuplicateKeyError("user id " + std::to_string(r.id));
    if (email_index_.count(r.email)) throw DuplicateKeyError("email " + r.email);
    commit_locked({{"o", "put"}, {"t", "users"}, {"r", Json(r)}});
  });
}

void ShardStore::create_users_bulk(const std::vector<UserRecord>& rs) {
  with_write([&] {
    for (const auto& r : rs) {
      if (users_.count(r.id)) throw DuplicateKeyError("user id " + std::to_string(r.id));
      if (email_index_.count(r.email)) throw DuplicateKeyError("email " + r.email);
    }
    for (const auto& r : rs)
      commit_locked({{"o", "put"}, {"t", "users"}, {"r", Json(r)}}, /*sync=*/false);
    wal_.sync();
  });
}

void ShardStore::update_user(const UserRecord& r) {
  with_write([&] {
    auto it = users_.find(r.id);
    if (it == users_.end()) throw NotFoundError("user " + std::to_string(r.id));
    if (r.email != it->second.email && email_index_.count(r.email))
      throw DuplicateKeyError("email " + r.email);
    commit_locked({{"o", "put"}, {"t", "users"}, {"r", Json(r)}});
  });
}

std::optional<UserRecord> ShardStore::get_user(UserId id) {
  return with_read([&]() -> std::optional<UserRecord> {
    auto it = users_.find(id);
    if (it == users_.end()) return std::nullopt;
    return it->second;
  });
}

std::optional<UserRecord> ShardStore::find_user_by_email(const std::string& email) {
  return with_read([&]() -> std::optional<UserRecord> {
    auto it = email_index_.find(email);
    if (it == email_index_.end()) return std::nullopt;
    return users_.at(it->second);
  });
}

std::int64_t ShardStore::user_count() {
  return with_read([&] { return static_cast<std::int64_t>(users_.size()); });
}

void ShardStore::create_profile(const ProfileRecord& r) {
  with_write([&] {
    if (profiles_.count(r.user_id))
      throw DuplicateKeyError("profile for user " + std::to_string(r.user_id));
    commit_locked({{"o", "put"}, {"t", "profiles"}, {"r", Json(r)}});
  });
}

void ShardStore::create_profiles_bulk(const std::vector<ProfileRecord>& rs) {
  with_write([&] {
    for (const auto& r : rs)
      if (profiles_.count(r.user_id))
        throw DuplicateKeyError("profile for user " + std::to_string(r.user_id));
    for (const auto& r : rs)
      commit_locked({{"o", "put"}, {"t", "profiles"}, {"r", Json(r)}}, /*sync=*/false);
    wal_.sync();
  });
}

void ShardStore::upsert_profile(const ProfileRecord& r) {
  with_write([&] { commit_locked({{"o", "put"}, {"t", "profiles"}, {"r", Json(r)}}); });
}

std::optional<ProfileRecord> ShardStore::get_profile(UserId user_id) {
  return with_read([&]() -> std::optional<ProfileRecord> {
    auto it = profiles_.find(user_id);
    if (it == profiles_.end()) return std::nullopt;
    return it->second;
  });
}

bool ShardStore::delete_profile(UserId user_id) {
  return with_write([&] {
    if (!profiles_.count(user_id)) return false;
    commit_locked({{"o", "del"}, {"t", "profiles"}, {"k", user_id}});
    return true;
  });
}

ActivityRecord ShardStore::create_activity(ActivityRecord r) {
  return with_write([&] {
    r.activity_id = next_activity_id_locked();
    commit_locked({{"o", "put"}, {"t", "activities"}, {"r", Json(r)}});
    return r;
  });
}

std::int64_t ShardStore::create_activities_bulk(std::vector<ActivityRecord> rs) {
  return with_write([&] {
    for (auto& r : rs) {
      r.activity_id = next_activity_id_locked();
      commit_locked({{"o", "put"}, {"t", "activities"}, {"r", Json(r)}}, /*sync=*/false);
    }
    wal_.sync();
    return static_cast<std::int64_t>(rs.size());
  });
}

std::optional<ActivityRecord> ShardStore::get_activity(std::int64_t activity_id) {
  return with_read([&]() -> std::optional<ActivityRecord> {
    auto it = activities_.find(activity_id);
    if (it == activities_.end()) return std::nullopt;
    return it->second;
  });
}

void ShardStore::update_activity(const ActivityRecord& r) {
  with_write([&] {
    if (!activities_.count(r.activity_id))
      throw NotFoundError("activity " + std::to_string(r.activity_id));
    commit_locked({{"o", "put"}, {"t", "activities"}, {"r", Json(r)}});
  });
}

bool ShardStore::delete_activity(std::int64_t activity_id) {
  return with_write([&] {
    if (!activities_.count(activity_id)) return false;
    commit_locked({{"o", "del"}, {"t", "activities"}, {"k", activity_id}});
    return true;
  });
}

ActivityPage ShardStore::list_activities(UserId user_id, std::optional<ActivityKind> kind,
                                         std::int64_t offset, std::int64_t limit) {
  return with_read([&] {
    std::vector<ActivityRecord> all;
    for (const auto& [id, a] : activities_) {
      if (a.user_id != user_id) continue;
      if (kind && a.kind != *kind) continue;
      all.push_back(a);
    }
    std::sort(all.begin(), all.end(), [](const ActivityRecord& x, const ActivityRecord& y) {
      if (x.recorded_at != y.recorded_at) return x.recorded_at > y.recorded_at;
      return x.activity_id > y.activity_id;
    });
    ActivityPage page;
    page.total = static_cast<std::int64_t>(all.size());
    if (offset < 0) offset = 0;
    if (offset < page.total) {
      auto first = all.begin() + offset;
      auto last = (limit < 0 || offset + limit > page.total) ? all.end() : first + limit;
      page.items.assign(first, last);
    }
    return page;
  });
}

PredictionRecord ShardStore::create_prediction(PredictionRecord r) {
  return with_write([&] {
    r.prediction_id = next_prediction_id_locked();
    commit_locked({{"o", "put"}, {"t", "predictions"}, {"r", Json(r)}});
    return r;
  });
}

std::optional<PredictionRecord> ShardStore::get_prediction(std::int64_t prediction_id) {
  return with_read([&]() -> std::optional<PredictionRecord> {
    auto it = predictions_.find(prediction_id);
    if (it == predictions_.end()) return std::nullopt;
    return it->second;
  });
}

bool ShardStore::delete_prediction(std::int64_t prediction_id) {
  return with_write([&] {
    if (!predictions_.count(prediction_id)) return false;
    commit_locked({{"o", "del"}, {"t", "predictions"}, {"k", prediction_id}});
    return true;
  });
}

std::vector<PredictionRecord> ShardStore::list_predictions(UserId user_id) {
  return with_read([&] {
    std::vector<PredictionRecord> out;
    for (const auto& [id, p] : predictions_)
      if (p.user_id == user_id) out.push_back(p);
    std::sort(out.begin(), out.end(), [](const PredictionRecord& x, const PredictionRecord& y) {
      if (x.created_at != y.created_at) return x.created_at > y.created_at;
      return x.prediction_id > y.prediction_id;
    });
    return out;
  });
}

std::vector<PredictionRecord> ShardStore::predictions_by_date(UserId user_id, Millis from,
                                                              Millis to) {
  if (from > to)
    throw InvalidRangeError("from " + std::to_string(from) + " > to " + std::to_string(to));
  auto all = list_predictions(user_id);
  std::vector<PredictionRecord> out;
  for (auto& p : all)
    if (p.created_at >= from && p.created_at <= to) out.push_back(std::move(p));
  return out;
}

void ShardStore::put_job(const PredictionJob& job) {
  with_write([&] { commit_locked({{"o", "put"}, {"t", "jobs"}, {"r", Json(job)}}); });
}

std::optional<PredictionJob> ShardStore::get_job(const std::string& correlation_id) {
  return with_read([&]() -> std::optional<PredictionJob> {
    auto it = jobs_.find(correlation_id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  });
}

bool ShardStore::mark_job_processing(const std::string& correlation_id) {
  return with_write([&] {
    auto it = jobs_.find(correlation_id);
    if (it == jobs_.end() || it->second.status != JobStatus::pending) return false;
    PredictionJob j = it->second;
    j.status = JobStatus::processing;
    commit_locked({{"o", "put"}, {"t", "jobs"}, {"r", Json(j)}});
    return true;
  });
}

std::optional<PredictionRecord> ShardStore::complete_job(const std::string& correlation_id,
                                                         const PredictionRecord& result,
                                                         Millis now) {
  return with_write([&]() -> std::optional<PredictionRecord> {
    auto it = jobs_.find(correlation_id);
    if (it == jobs_.end()) throw NotFoundError("job " + correlation_id);
    if (it->second.status == JobStatus::completed || it->second.status == JobStatus::failed)
      return std::nullopt;  // duplicate response absorbed
    PredictionRecord stored = result;
    stored.prediction_id = next_prediction_id_locked();
    stored.user_id = it->second.user_id;
    stored.created_at = now;
    stored.updated_at = now;
    PredictionJob j = it->second;
    j.status = JobStatus::completed;
    j.completed_at = now;
    j.result = stored;
    j.error_detail.reset();
    commit_locked({{"o", "complete"}, {"job", Json(j)}, {"pred", Json(stored)}});
    return stored;
  });
}

bool ShardStore::fail_job(const std::string& correlation_id, const std::string& error,
                          Millis now) {
  return with_write([&] {
    auto it = jobs_.find(correlation_id);
    if (it == jobs_.end()) throw NotFoundError("job " + correlation_id);
    if (it->second.status == JobStatus::completed || it->second.status == JobStatus::failed)
      return false;
    PredictionJob j = it->second;
    j.status = JobStatus::failed;
    j.completed_at = now;
    j.error_detail = error;
    commit_locked({{"o", "complete"}, {"job", Json(j)}});
    return true;
  });
}

std::map<std::string, std::int64_t> ShardStore::job_counts() {
  return with_read([&] {
    std::map<std::string, std::int64_t> out;
    for (const auto& [cid, j] : jobs_) out[to_string(j.status)]++;
    return out;
  });
}

void ShardStore::for_each_user_id(
    const std::function<void(const std::string& table, UserId)>& fn) {
  with_read([&] {
    for (const auto& [id, r] : users_) fn("users", r.id);
    for (const auto& [id, r] : profiles_) fn("profiles", r.user_id);
    for (const auto& [id, r] : activities_) fn("activities", r.user_id);
    for (const auto& [id, r] : predictions_) fn("predictions", r.user_id);
    for (const auto& [cid, r] : jobs_) fn("jobs", r.user_id);
  });
}

void ShardStore::checkpoint() {
  std::lock_guard<std::mutex> g(mu_);
  FileLock::Guard fg(lock_, /*exclusive=*/true);
  refresh_locked();
  Json snap;
  snap["version"] = 1;
  snap["shard"] = shard_index_;
  snap["counters"] = {{"activity", counters_.activity}, {"prediction", counters_.prediction}};
  auto dump_values = [](const auto& table) {
    Json arr = Json::array();
    for (const auto& [k, v] : table) arr.push_back(Json(v));
    return arr;
  };
  snap["users"] = dump_values(users_);
  snap["profiles"] = dump_values(profiles_);
  snap["activities"] = dump_values(activities_);
  snap["predictions"] = dump_values(predictions_);
  snap["jobs"] = dump_values(jobs_);
  write_file_atomic(dir_ / "snapshot.json", snap.dump());
  wal_.truncate();
  wal_offset_ = 0;
}

// --- ShardedStore ---------------------------------------------------------

bool data_dir_is_dirty(const std::filesystem::path& data_dir) {
  return std::filesystem::exists(data_dir / "allocator.json") ||
         std::filesystem::exists(data_dir / "shards");
}

ShardedStore::ShardedStore(std::filesystem::path data_dir,
                           std::shared_ptr<ShardDirectory> directory, int pool_max_connections,
                           Millis pool_acquire_timeout_ms)
    : data_dir_(std::move(data_dir)),
      directory_(std::move(directory)),
      pool_max_(pool_max_connections),
      pool_timeout_ms_(pool_acquire_timeout_ms),
      allocator_lock_(data_dir_ / "allocator.lock") {}

ShardStore& ShardedStore::shard_nolease(int shard_index) {
  std::lock_guard<std::mutex> g(shards_mu_);
  if (shard_index >= static_cast<int>(shards_.size()))
    shards_.resize(shard_index + 1);
  auto& slot = shards_[shard_index];
  if (!slot) slot = std::make_unique<ShardStore>(shard_index, shard_dir(data_dir_, shard_index));
  return *slot;
}

ConnectionPool& ShardedStore::pool(int shard_index) {
  std::lock_guard<std::mutex> g(shards_mu_);
  if (shard_index >= static_cast<int>(pools_.size()))
    pools_.resize(shard_index + 1);
  auto& slot = pools_[shard_index];
  if (!slot) slot = std::make_unique<ConnectionPool>(pool_max_, pool_timeout_ms_);
  return *slot;
}

ShardStore& ShardedStore::shard(int shard_index) { return shard_nolease(shard_index); }

std::vector<int> ShardedStore::shard_indexes_on_disk() {
  std::vector<int> out;
  auto root = data_dir_ / "shards";
  if (std::filesystem::exists(root)) {
    for (const auto& e : std::filesystem::directory_iterator(root)) {
      auto name = e.path().filename().string();
      if (name.rfind("shard-", 0) == 0) {
        try {
          out.push_back(std::stoi(name.substr(6)));
        } catch (const std::exception&) {  // stray directory, not a shard
        }
      }
    }
  }
  {
    std::lock_guard<std::mutex> g(shards_mu_);
    for (int i = 0; i < static_cast<int>(shards_.size()); ++i)
      if (shards_[i]) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::int64_t ShardedStore::read_next_user_id_locked() {
  std::ifstream in(data_dir_ / "allocator.json");
  if (!in) return 1;
  Json j = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw StorageError("corrupt allocator file");
  return j.value("next_user_id", 1LL);
}

void ShardedStore::write_next_user_id_locked(std::int64_t next) {
  write_file_atomic(data_dir_ / "allocator.json", Json{{"next_user_id", next}}.dump());
}

std::optional<UserId> ShardedStore::find_email_anywhere(const std::string& email) {
  for (int s : shard_indexes_on_disk()) {
    auto hit = shard_nolease(s).find_user_by_email(email);
    if (hit) return hit->id;
  }
  return std::nullopt;
}

UserRecord ShardedStore::register_user(const NewUser& nu) {
  return bulk_register({nu}).front();
}

std::vector<UserRecord> ShardedStore::bulk_register(const std::vector<NewUser>& nus) {
  FileLock::Guard g(allocator_lock_, /*exclusive=*/true);
  std::unordered_map<std::string, bool> batch_emails;
  for (const auto& nu : nus) {
    if (find_email_anywhere(nu.email)) throw DuplicateKeyError("email " + nu.email);
    if (!batch_emails.emplace(nu.email, true).second)
      throw DuplicateKeyError("email " + nu.email);
  }
  std::int64_t next = read_next_user_id_locked();
  // Burn the ids before inserting: a crash mid-insert skips ids but never
  // reuses one.
  write_next_user_id_locked(next + static_cast<std::int64_t>(nus.size()));

  std::vector<UserRecord> out;
  std::map<int, std::vector<UserRecord>> by_shard;
  for (const auto& nu : nus) {
    UserRecord r;
    r.id = next++;
    r.email = nu.email;
    r.password_hash = nu.password_hash;
    r.display_name = nu.display_name;
    r.verified = nu.verified;
    r.created_at = nu.created_at;
    by_shard[directory_->route(r.id)].push_back(r);
    out.push_back(std::move(r));
  }
  for (auto& [s, rs] : by_shard) {
    auto lease = pool(s).acquire();
    if (rs.size() == 1)
      shard_nolease(s).create_user(rs.front());
    else
      shard_nolease(s).create_users_bulk(rs);
  }
  return out;
}

std::optional<UserRecord> ShardedStore::find_user_by_email(const std::string& email) {
  for (int s : shard_indexes_on_disk()) {
    auto lease = pool(s).acquire();
    auto hit = shard_nolease(s).find_user_by_email(email);
    if (hit) return hit;
  }
  return std::nullopt;
}

UserRecord ShardedStore::get_user(UserId id) {
  return on_user_shard(id, [&](ShardStore& s) {
    auto u = s.get_user(id);
    if (!u) throw NotFoundError("user " + std::to_string(id));
    return *u;
  });
}

UserRecord ShardedStore::mutate_user(UserId id, const std::function<void(UserRecord&)>& fn) {
  return on_user_shard(id, [&](ShardStore& s) {
    auto u = s.get_user(id);
    if (!u) throw NotFoundError("user " + std::to_string(id));
    UserRecord r = *u;
    fn(r);
    r.id = u->id;        // identity is immutable here
    r.email = u->email;  // email changes go through change_email
    s.update_user(r);
    return r;
  });
}

UserRecord ShardedStore::change_email(UserId id, const std::string& new_email) {
  // Allocator lock serializes against concurrent registrations of the same
  // address.
  FileLock::Guard g(allocator_lock_, /*exclusive=*/true);
  auto existing = find_email_anywhere(new_email);
  if (existing && *existing != id) throw DuplicateKeyError("email " + new_email);
  return on_user_shard(id, [&](ShardStore& s) {
    auto u = s.get_user(id);
    if (!u) throw NotFoundError("user " + std::to_string(id));
    UserRecord r = *u;
    r.email = new_email;
    s.update_user(r);
    return r;
  });
}

void ShardedStore::create_profile(const ProfileRecord& r) {
  on_user_shard(r.user_id, [&](ShardStore& s) { s.create_profile(r); });
}

void ShardedStore::upsert_profile(const ProfileRecord& r) {
  on_user_shard(r.user_id, [&](ShardStore& s) { s.upsert_profile(r); });
}

std::optional<ProfileRecord> ShardedStore::get_profile(UserId user_id) {
  return on_user_shard(user_id, [&](ShardStore& s) { return s.get_profile(user_id); });
}

bool ShardedStore::delete_profile(UserId user_id) {
  return on_user_shard(user_id, [&](ShardStore& s) { return s.delete_profile(user_id); });
}

ActivityRecord ShardedStore::create_activity(ActivityRecord r) {
  return on_user_shard(r.user_id,
                       [&](ShardStore& s) { return s.create_activity(std::move(r)); });
}

std::optional<ActivityRecord> ShardedStore::get_activity(UserId user_id,
                                                         std::int64_t activity_id) {
  int s = shard_of_encoded_id(activity_id);
  if (s < 0) return std::nullopt;
  return on_shard(s, [&](ShardStore& st) -> std::optional<ActivityRecord> {
    auto a = st.get_activity(activity_id);
    if (!a || a->user_id != user_id) return std::nullopt;  // foreign looks absent
    return a;
  });
}

bool ShardedStore::update_activity(UserId user_id, const ActivityRecord& r) {
  int s = shard_of_encoded_id(r.activity_id);
  if (s < 0) return false;
  return on_shard(s, [&](ShardStore& st) {
    auto a = st.get_activity(r.activity_id);
    if (!a || a->user_id != user_id) return false;
    ActivityRecord next = r;
    next.user_id = a->user_id;  // ownership never transfers
    st.update_activity(next);
    return true;
  });
}

bool ShardedStore::delete_activity(UserId user_id, std::int64_t activity_id) {
  int s = shard_of_encoded_id(activity_id);
  if (s < 0) return false;
  return on_shard(s, [&](ShardStore& st) {
    auto a = st.get_activity(activity_id);
    if (!a || a->user_id != user_id) return false;
    return st.delete_activity(activity_id);
  });
}

ActivityPage ShardedStore::list_activities(UserId user_id, std::optional<ActivityKind> kind,
                                           std::int64_t offset, std::int64_t limit) {
  return on_user_shard(user_id, [&](ShardStore& s) {
    return s.list_activities(user_id, kind, offset, limit);
  });
}

PredictionRecord ShardedStore::create_prediction(PredictionRecord r) {
  return on_user_shard(r.user_id,
                       [&](ShardStore& s) { return s.create_prediction(std::move(r)); });
}

std::vector<PredictionRecord> ShardedStore::list_predictions(UserId user_id) {
  return on_user_shard(user_id, [&](ShardStore& s) { return s.list_predictions(user_id); });
}

std::vector<PredictionRecord> ShardedStore::predictions_by_date(UserId user_id, Millis from,
                                                                Millis to) {
  return on_user_shard(user_id,
                       [&](ShardStore& s) { return s.predictions_by_date(user_id, from, to); });
}

bool ShardedStore::delete_prediction(UserId user_id, std::int64_t prediction_id) {
  int s = shard_of_encoded_id(prediction_id);
  if (s < 0) return false;
  return on_shard(s, [&](ShardStore& st) {
    auto p = st.get_prediction(prediction_id);
    if (!p || p->user_id != user_id) return false;
    return st.delete_prediction(prediction_id);
  });
}

void ShardedStore::put_job(const PredictionJob& job) {
  on_user_shard(job.user_id, [&](ShardStore& s) { s.put_job(job); });
}

std::optional<PredictionJob> ShardedStore::get_job(UserId user_id,
                                                   const std::string& correlation_id) {
  return on_user_shard(user_id, [&](ShardStore& s) { return s.get_job(correlation_id); });
}

std::optional<PredictionJob> ShardedStore::find_job(const std::string& correlation_id) {
  for (int s : shard_indexes_on_disk()) {
    auto lease = pool(s).acquire();
    if (auto job = shard_nolease(s).get_job(correlation_id)) return job;
  }
  return std::nullopt;
}

bool ShardedStore::mark_job_processing(UserId user_id, const std::string& correlation_id) {
  return on_user_shard(user_id,
                       [&](ShardStore& s) { return s.mark_job_processing(correlation_id); });
}

std::optional<PredictionRecord> ShardedStore::complete_job(UserId user_id,
                                                           const std::string& correlation_id,
                                                           const PredictionRecord& result,
                                                           Millis now) {
  return on_user_shard(user_id, [&](ShardStore& s) {
    return s.complete_job(correlation_id, result, now);
  });
}

bool ShardedStore::fail_job(UserId user_id, const std::string& correlation_id,
                            const std::string& error, Millis now) {
  return on_user_shard(user_id,
                       [&](ShardStore& s) { return s.fail_job(correlation_id, error, now); });
}

std::map<std::string, std::int64_t> ShardedStore::job_counts() {
  std::map<std::string, std::int64_t> out;
  for (int s : shard_indexes_on_disk()) {
    auto lease = pool(s).acquire();
    for (const auto& [k, v] : shard_nolease(s).job_counts()) out[k] += v;
  }
  return out;
}

void ShardedStore::bulk_insert_fixtures(const std::vector<ProfileRecord>& profiles,
                                        std::vector<ActivityRecord> activities) {
  std::map<int, std::vector<ProfileRecord>> profs;
  for (const auto& p : profiles) profs[directory_->route(p.user_id)].push_back(p);
  std::map<int, std::vector<ActivityRecord>> acts;
  for (auto& a : activities) acts[directory_->route(a.user_id)].push_back(std::move(a));
  for (auto& [s, rs] : profs) {
    auto lease = pool(s).acquire();
    shard_nolease(s).create_profiles_bulk(rs);
  }
  for (auto& [s, rs] : acts) {
    auto lease = pool(s).acquire();
    shard_nolease(s).create_activities_bulk(std::move(rs));
  }
}

std::vector<std::int64_t> ShardedStore::census() {
  auto indexes = shard_indexes_on_disk();
  int count = directory_->snapshot().shard_count();
  for (int s : indexes) count = std::max(count, s + 1);
  std::vector<std::int64_t> out(count, 0);
  for (int s : indexes) out[s] = shard_nolease(s).user_count();
  return out;
}

PlacementReport ShardedStore::verify_placement() {
  PlacementReport report;
  auto map = directory_->snapshot();
  for (int s : shard_indexes_on_disk()) {
    shard_nolease(s).for_each_user_id([&](const std::string& table, UserId uid) {
      ++report.records_checked;
      auto routed = map.try_route(uid);
      if (!routed || *routed != s)
        report.violations.push_back(table + " record for user " + std::to_string(uid) +
                                    " found on shard " + std::to_string(s));
    });
  }
  return report;
}

void ShardedStore::checkpoint_all() {
  for (int s : shard_indexes_on_disk()) shard_nolease(s).checkpoint();
}

void ShardedStore::close() {
  std::lock_guard<std::mutex> g(shards_mu_);
  for (auto& p : pools_)
    if (p) p->close();
}

}  // namespace shardline

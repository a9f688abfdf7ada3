#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "shardline/domain.hpp"
#include "shardline/fslock.hpp"
#include "shardline/json_util.hpp"
#include "shardline/pool.hpp"
#include "shardline/shard_router.hpp"

namespace shardline {

// Activity and prediction ids are allocated per shard and made globally
// unique by encoding the shard into the low bits: id = local * 64 + shard.
std::int64_t encode_id(std::int64_t local, int shard_index);
int shard_of_encoded_id(std::int64_t id);      // -1 for ids that decode to nothing
std::int64_t local_of_encoded_id(std::int64_t id);

struct ActivityPage {
  std::vector<ActivityRecord> items;
  std::int64_t total = 0;
};

// One shard's tables, persisted as a JSON snapshot plus an append-only WAL of
// JSON-line records. Safe for concurrent use from multiple processes: every
// operation takes the shard's flock (shared for reads, exclusive for writes)
// and first replays any WAL lines other processes appended.
class ShardStore {
public:
  ShardStore(int shard_index, std::filesystem::path dir);

  int shard_index() const { return shard_index_; }
  const std::filesystem::path& dir() const { return dir_; }

  // users
  void create_user(const UserRecord& r);           // DuplicateKey on id or email
  void update_user(const UserRecord& r);           // NotFound when absent
  std::optional<UserRecord> get_user(UserId id);
  std::optional<UserRecord> find_user_by_email(const std::string& email);
  std::int64_t user_count();
  void create_users_bulk(const std::vector<UserRecord>& rs);

  // profiles (keyed by user_id, at most one per user)
  void create_profile(const ProfileRecord& r);     // DuplicateKey when present
  void upsert_profile(const ProfileRecord& r);
  std::optional<ProfileRecord> get_profile(UserId user_id);
  bool delete_profile(UserId user_id);
  void create_profiles_bulk(const std::vector<ProfileRecord>& rs);

  // activities
  ActivityRecord create_activity(ActivityRecord r);  // assigns activity_id
  std::optional<ActivityRecord> get_activity(std::int64_t activity_id);
  void update_activity(const ActivityRecord& r);     // NotFound when absent
  bool delete_activity(std::int64_t activity_id);
  ActivityPage list_activities(UserId user_id, std::optional<ActivityKind> kind,
                               std::int64_t offset, std::int64_t limit);
  std::int64_t create_activities_bulk(std::vector<ActivityRecord> rs);

  // predictions
  PredictionRecord create_prediction(PredictionRecord r);  // assigns prediction_id
  std::optional<PredictionRecord> get_prediction(std::int64_t prediction_id);
  bool delete_prediction(std::int64_t prediction_id);
  std::vector<PredictionRecord> list_predictions(UserId user_id);
  // All predictions with created_at in [from, to], newest first. InvalidRange
  // when from > to.
  std::vector<PredictionRecord> predictions_by_date(UserId user_id, Millis from, Millis to);

  // jobs (keyed by correlation_id)
  void put_job(const PredictionJob& job);
  std::optional<PredictionJob> get_job(const std::string& correlation_id);
  // pending -> processing; false (and no write) from any other state.
  bool mark_job_processing(const std::string& correlation_id);
  // Atomically marks the job completed and persists its prediction (one WAL
  // record, so crash cannot separate them). Returns the stored prediction,
  // or nullopt when the job was already terminal (duplicate absorbed).
  // NotFound when the job does not exist.
  std::optional<PredictionRecord> complete_job(const std::string& correlation_id,
                                               const PredictionRecord& result, Millis now);
  // Same idempotence contract; true when the transition happened.
  bool fail_job(const std::string& correlation_id, const std::string& error, Millis now);
  std::map<std::string, std::int64_t> job_counts();

  // admin
  void for_each_user_id(
      const std::function<void(const std::string& table, UserId)>& fn);
  // Folds the WAL into the snapshot. Callers must know no other process has
  // this shard open (used after seeding).
  void checkpoint();

private:
  struct Counters {
    std::int64_t activity = 0;
    std::int64_t prediction = 0;
  };

  void refresh_locked();
  void reload_locked();
  void load_snapshot_locked();
  void apply_locked(const Json& rec);
  void commit_locked(const Json& rec, bool sync = true);
  std::int64_t next_activity_id_locked();
  std::int64_t next_prediction_id_locked();

  template <class F>
  auto with_read(F&& f) {
    std::lock_guard<std::mutex> g(mu_);
    FileLock::Guard fg(lock_, /*exclusive=*/false);
    refresh_locked();
    return f();
  }
  template <class F>
  auto with_write(F&& f) {
    std::lock_guard<std::mutex> g(mu_);
    FileLock::Guard fg(lock_, /*exclusive=*/true);
    refresh_locked();
    return f();
  }

  const int shard_index_;
  const std::filesystem::path dir_;
  std::mutex mu_;
  FileLock lock_;
  AppendLog wal_;
  std::uint64_t wal_offset_ = 0;

  std::map<UserId, UserRecord> users_;
  std::unordered_map<std::string, UserId> email_index_;
  std::map<UserId, ProfileRecord> profiles_;
  std::map<std::int64_t, ActivityRecord> activities_;
  std::map<std::int64_t, PredictionRecord> predictions_;
  std::unordered_map<std::string, PredictionJob> jobs_;
  Counters counters_;
};

struct NewUser {
  std::string email;
  std::string password_hash;
  std::string display_name;
  bool verified = false;
  Millis created_at = 0;
};

struct PlacementReport {
  std::int64_t records_checked = 0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// True when the directory already holds seeded data.
bool data_dir_is_dirty(const std::filesystem::path& data_dir);

// Facade over all shards: routes by user id, admits every table operation
// through the owning shard's connection pool, and allocates global user ids.
class ShardedStore {
public:
  ShardedStore(std::filesystem::path data_dir, std::shared_ptr<ShardDirectory> directory,
               int pool_max_connections, Millis pool_acquire_timeout_ms);

  // auth & users
  UserRecord register_user(const NewUser& nu);              // DuplicateKey on email
  std::vector<UserRecord> bulk_register(const std::vector<NewUser>& nus);
  std::optional<UserRecord> find_user_by_email(const std::string& email);
  UserRecord get_user(UserId id);                           // NotFound
  // Applies fn to the stored record; must not change id or email.
  UserRecord mutate_user(UserId id, const std::function<void(UserRecord&)>& fn);
  UserRecord change_email(UserId id, const std::string& new_email);  // DuplicateKey

  // profiles
  void create_profile(const ProfileRecord& r);
  void upsert_profile(const ProfileRecord& r);
  std::optional<ProfileRecord> get_profile(UserId user_id);
  bool delete_profile(UserId user_id);

  // activities; user_id is the authenticated owner and foreign records are
  // reported as absent
  ActivityRecord create_activity(ActivityRecord r);
  std::optional<ActivityRecord> get_activity(UserId user_id, std::int64_t activity_id);
  bool update_activity(UserId user_id, const ActivityRecord& r);
  bool delete_activity(UserId user_id, std::int64_t activity_id);
  ActivityPage list_activities(UserId user_id, std::optional<ActivityKind> kind,
                               std::int64_t offset, std::int64_t limit);

  // predictions
  PredictionRecord create_prediction(PredictionRecord r);
  std::vector<PredictionRecord> list_predictions(UserId user_id);
  std::vector<PredictionRecord> predictions_by_date(UserId user_id, Millis from, Millis to);
  bool delete_prediction(UserId user_id, std::int64_t prediction_id);

  // jobs
  void put_job(const PredictionJob& job);
  std::optional<PredictionJob> get_job(UserId user_id, const std::string& correlation_id);
  // Scans every shard; lets callers tell "someone else's job" from "no such job".
  std::optional<PredictionJob> find_job(const std::string& correlation_id);
  bool mark_job_processing(UserId user_id, const std::string& correlation_id);
  std::optional<PredictionRecord> complete_job(UserId user_id, const std::string& correlation_id,
                                               const PredictionRecord& result, Millis now);
  bool fail_job(UserId user_id, const std::string& correlation_id,
                const std::string& error, Millis now);
  std::map<std::string, std::int64_t> job_counts();

  // seeding
  void bulk_insert_fixtures(const std::vector<ProfileRecord>& profiles,
                            std::vector<ActivityRecord> activities);

  // admin
  std::vector<std::int64_t> census();
  PlacementReport verify_placement();
  void checkpoint_all();

  ConnectionPool& pool(int shard_index);
  ShardStore& shard(int shard_index);
  std::shared_ptr<ShardDirectory> directory() { return directory_; }
  const std::filesystem::path& data_dir() const { return data_dir_; }
  void close();

private:
  ShardStore& shard_nolease(int shard_index);
  std::vector<int> shard_indexes_on_disk();
  std::int64_t read_next_user_id_locked();
  void write_next_user_id_locked(std::int64_t next);
  std::optional<UserId> find_email_anywhere(const std::string& email);

  template <class F>
  auto on_shard(int s, F&& f) {
    auto lease = pool(s).acquire();
    return f(shard_nolease(s));
  }
  template <class F>
  auto on_user_shard(UserId uid, F&& f) {
    return on_shard(directory_->route(uid), std::forward<F>(f));
  }

  const std::filesystem::path data_dir_;
  std::shared_ptr<ShardDirectory> directory_;
  const int pool_max_;
  const Millis pool_timeout_ms_;

  std::mutex shards_mu_;
  std::vector<std::unique_ptr<ShardStore>> shards_;
  std::vector<std::unique_ptr<ConnectionPool>> pools_;

  FileLock allocator_lock_;
};

}  // namespace shardline

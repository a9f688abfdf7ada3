#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shardline/clock.hpp"
#include "shardline/json_util.hpp"

namespace shardline {

// User ids are sequential positive integers so that range sharding has an
// ordered key to partition on.
using UserId = std::int64_t;

enum class ActivityKind { smoking, exercise };
enum class Impact { raises_risk, lowers_risk, neutral };
enum class JobStatus { pending, processing, completed, failed };

std::string to_string(ActivityKind k);
std::string to_string(Impact i);
std::string to_string(JobStatus s);
std::optional<ActivityKind> activity_kind_from_string(const std::string& s);
std::optional<Impact> impact_from_string(const std::string& s);
std::optional<JobStatus> job_status_from_string(const std::string& s);

struct UserRecord {
  UserId id = 0;
  std::string email;          // unique across all shards, stored lowercase
  std::string password_hash;  // never the plaintext
  std::string display_name;
  bool verified = false;
  Millis created_at = 0;

  bool operator==(const UserRecord&) const = default;
};

struct ProfileRecord {
  UserId user_id = 0;
  int age = 0;                  // years, 0..120
  double bmi = 0.0;             // kg/m^2, 10.0..70.0
  int cholesterol_level = 0;    // mg/dL, 80..500
  bool hypertension = false;
  bool macrosomic_baby_history = false;
  bool family_history_diabetes = false;
  int smoking_years = 0;        // 0..100
  Millis updated_at = 0;

  bool operator==(const ProfileRecord&) const = default;
};

struct ActivityRecord {
  std::int64_t activity_id = 0;  // unique per shard, globally encoded
  UserId user_id = 0;
  ActivityKind kind = ActivityKind::smoking;
  std::int64_t quantity = 0;  // cigarettes/day or sessions/week
  Millis recorded_at = 0;

  bool operator==(const ActivityRecord&) const = default;
};

// The nine explained factors, in canonical order. This order is shared by
// FeatureVector, model weights and PredictionRecord.
inline constexpr std::array<const char*, 9> kFactorNames = {
    "age",           "bmi",           "cholesterol",
    "hypertension",  "macrosomic_baby", "family_history",
    "smoking_years", "smoking_habit", "exercise_frequency"};
inline constexpr std::size_t kFactorCount = kFactorNames.size();

struct FactorTriple {
  double contribution = 0.0;
  Impact impact = Impact::neutral;
  std::string explanation;

  bool operator==(const FactorTriple&) const = default;
};

// Sign rule tying impact to contribution.
Impact impact_for(double contribution);

// Denormalized prediction row: 6 metadata attributes plus 9 factors of
// (contribution, impact, explanation) = 33 leaf attributes when serialized.
struct PredictionRecord {
  std::int64_t prediction_id = 0;
  UserId user_id = 0;
  Millis created_at = 0;
  Millis updated_at = 0;
  std::string model_version;
  double risk_score = 0.0;  // in [0,1]
  std::array<FactorTriple, kFactorCount> factors{};

  bool operator==(const PredictionRecord&) const = default;
};

struct PredictionJob {
  std::string correlation_id;
  UserId user_id = 0;
  JobStatus status = JobStatus::pending;
  Millis submitted_at = 0;
  std::optional<Millis> completed_at;
  std::optional<PredictionRecord> result;  // present iff completed
  std::optional<std::string> error_detail;

  bool operator==(const PredictionJob&) const = default;
};

// --- validation ---------------------------------------------------------

struct ValidationError {
  std::string field;
  std::string allowed;  // human-readable allowed range, e.g. "[10, 70]"

  bool operator==(const ValidationError&) const = default;
};

struct ProfileValidation {
  std::optional<ProfileRecord> record;
  std::vector<ValidationError> errors;
  bool ok() const { return record.has_value(); }
};

// Checks every field of a profile-shaped JSON object and reports every
// violation; user_id and updated_at are left to the caller.
ProfileValidation validate_profile(const Json& candidate);

double sigmoid(double x);

// --- JSON wire encoding (UTF-8, snake_case keys) -------------------------

void to_json(Json& j, const UserRecord& r);
void from_json(const Json& j, UserRecord& r);
void to_json(Json& j, const ProfileRecord& r);
void from_json(const Json& j, ProfileRecord& r);
void to_json(Json& j, const ActivityRecord& r);
void from_json(const Json& j, ActivityRecord& r);
void to_json(Json& j, const FactorTriple& t);
void from_json(const Json& j, FactorTriple& t);
void to_json(Json& j, const PredictionRecord& r);
void from_json(const Json& j, PredictionRecord& r);
void to_json(Json& j, const PredictionJob& job);
void from_json(const Json& j, PredictionJob& job);

}  // namespace shardline

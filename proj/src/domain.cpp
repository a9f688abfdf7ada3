#include "shardline/domain.hpp"

#include <cmath>

namespace shardline {

std::string to_string(ActivityKind k) {
  return k == ActivityKind::smoking ? "smoking" : "exercise";
}

std::string to_string(Impact i) {
  switch (i) {
    case Impact::raises_risk: return "raises_risk";
    case Impact::lowers_risk: return "lowers_risk";
    default: return "neutral";
  }
}

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::pending: return "pending";
    case JobStatus::processing: return "processing";
    case JobStatus::completed: return "completed";
    default: return "failed";
  }
}

std::optional<ActivityKind> activity_kind_from_string(const std::string& s) {
  if (s == "smoking") return ActivityKind::smoking;
  if (s == "exercise") return ActivityKind::exercise;
  return std::nullopt;
}

std::optional<Impact> impact_from_string(const std::string& s) {
  if (s == "raises_risk") return Impact::raises_risk;
  if (s == "lowers_risk") return Impact::lowers_risk;
  if (s == "neutral") return Impact::neutral;
  return std::nullopt;
}

std::optional<JobStatus> job_status_from_string(const std::string& s) {
  if (s == "pending") return JobStatus::pending;
  if (s == "processing") return JobStatus::processing;
  if (s == "completed") return JobStatus::completed;
  if (s == "failed") return JobStatus::failed;
  return std::nullopt;
}

Impact impact_for(double contribution) {
  if (contribution > 0.0) return Impact::raises_risk;
  if (contribution < 0.0) return Impact::lowers_risk;
  return Impact::neutral;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// --- validation ---------------------------------------------------------

namespace {

struct FieldCheck {
  const Json& src;
  std::vector<ValidationError>& errors;

  bool int_in_range(const char* field, long lo, long hi, int& out) {
    auto it = src.find(field);
    std::string allowed =
        "integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
    if (it == src.end() || !it->is_number_integer()) {
      errors.push_back({field, allowed});
      return false;
    }
    long v = it->get<long>();
    if (v < lo || v > hi) {
      errors.push_back({field, "[" + std::to_string(lo) + ", " + std::to_string(hi) + "]"});
      return false;
    }
    out = static_cast<int>(v);
    return true;
  }

  bool number_in_range(const char* field, double lo, double hi, double& out) {
    auto it = src.find(field);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "[%.1f, %.1f]", lo, hi);
    if (it == src.end() || !it->is_number()) {
      errors.push_back({field, std::string("number in ") + buf});
      return false;
    }
    double v = it->get<double>();
    if (v < lo || v > hi) {
      errors.push_back({field, buf});
      return false;
    }
    out = v;
    return true;
  }

  bool boolean(const char* field, bool& out) {
    auto it = src.find(field);
    if (it == src.end() || !it->is_boolean()) {
      errors.push_back({field, "boolean"});
      return false;
    }
    out = it->get<bool>();
    return true;
  }
};

}  // namespace

ProfileValidation validate_profile(const Json& candidate) {
  ProfileValidation result;
  if (!candidate.is_object()) {
    result.errors.push_back({"", "object with profile fields"});
    return result;
  }
  ProfileRecord rec;
  FieldCheck check{candidate, result.errors};
  bool ok = true;
  ok &= check.int_in_range("age", 0, 120, rec.age);
  ok &= check.number_in_range("bmi", 10.0, 70.0, rec.bmi);
  ok &= check.int_in_range("cholesterol_level", 80, 500, rec.cholesterol_level);
  ok &= check.boolean("hypertension", rec.hypertension);
  ok &= check.boolean("macrosomic_baby_history", rec.macrosomic_baby_history);
  ok &= check.boolean("family_history_diabetes", rec.family_history_diabetes);
  ok &= check.int_in_range("smoking_years", 0, 100, rec.smoking_years);
  if (ok) result.record = rec;
  return result;
}

// --- JSON ----------------------------------------------------------------

void to_json(Json& j, const UserRecord& r) {
  j = Json{{"id", r.id},
           {"email", r.email},
           {"password_hash", r.password_hash},
           {"display_name", r.display_name},
           {"verified", r.verified},
           {"created_at", r.created_at}};
}

void from_json(const Json& j, UserRecord& r) {
  j.at("id").get_to(r.id);
  j.at("email").get_to(r.email);
  j.at("password_hash").get_to(r.password_hash);
  j.at("display_name").get_to(r.display_name);
  j.at("verified").get_to(r.verified);
  j.at("created_at").get_to(r.created_at);
}

void to_json(Json& j, const ProfileRecord& r) {
  j = Json{{"user_id", r.user_id},
           {"age", r.age},
           {"bmi", r.bmi},
           {"cholesterol_level", r.cholesterol_level},
           {"hypertension", r.hypertension},
           {"macrosomic_baby_history", r.macrosomic_baby_history},
           {"family_history_diabetes", r.family_history_diabetes},
           {"smoking_years", r.smoking_years},
           {"updated_at", r.updated_at}};
}

void from_json(const Json& j, ProfileRecord& r) {
  j.at("user_id").get_to(r.user_id);
  j.at("age").get_to(r.age);
  j.at("bmi").get_to(r.bmi);
  j.at("cholesterol_level").get_to(r.cholesterol_level);
  j.at("hypertension").get_to(r.hypertension);
  j.at("macrosomic_baby_history").get_to(r.macrosomic_baby_history);
  j.at("family_history_diabetes").get_to(r.family_history_diabetes);
  j.at("smoking_years").get_to(r.smoking_years);
  j.at("updated_at").get_to(r.updated_at);
}

void to_json(Json& j, const ActivityRecord& r) {
  j = Json{{"activity_id", r.activity_id},
           {"user_id", r.user_id},
           {"kind", to_string(r.kind)},
           {"quantity", r.quantity},
           {"recorded_at", r.recorded_at}};
}

void from_json(const Json& j, ActivityRecord& r) {
  j.at("activity_id").get_to(r.activity_id);
  j.at("user_id").get_to(r.user_id);
  auto kind = activity_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw Json::other_error::create(501, "unknown activity kind", &j);
  r.kind = *kind;
  j.at("quantity").get_to(r.quantity);
  j.at("recorded_at").get_to(r.recorded_at);
}

void to_json(Json& j, const FactorTriple& t) {
  j = Json{{"contribution", t.contribution},
           {"impact", to_string(t.impact)},
           {"explanation", t.explanation}};
}

void from_json(const Json& j, FactorTriple& t) {
  j.at("contribution").get_to(t.contribution);
  auto impact = impact_from_string(j.at("impact").get<std::string>());
  if (!impact) throw Json::other_error::create(501, "unknown impact", &j);
  t.impact = *impact;
  j.at("explanation").get_to(t.explanation);
}

void to_json(Json& j, const PredictionRecord& r) {
  Json factors = Json::object();
  for (std::size_t i = 0; i < kFactorCount; ++i) {
    factors[kFactorNames[i]] = r.factors[i];
  }
  j = Json{{"prediction_id", r.prediction_id},
           {"user_id", r.user_id},
           {"created_at", r.created_at},
           {"updated_at", r.updated_at},
           {"model_version", r.model_version},
           {"risk_score", r.risk_score},
           {"factors", std::move(factors)}};
}

void from_json(const Json& j, PredictionRecord& r) {
  j.at("prediction_id").get_to(r.prediction_id);
  j.at("user_id").get_to(r.user_id);
  j.at("created_at").get_to(r.created_at);
  j.at("updated_at").get_to(r.updated_at);
  j.at("model_version").get_to(r.model_version);
  j.at("risk_score").get_to(r.risk_score);
  const Json& factors = j.at("factors");
  for (std::size_t i = 0; i < kFactorCount; ++i) {
    factors.at(kFactorNames[i]).get_to(r.factors[i]);
  }
}

void to_json(Json& j, const PredictionJob& job) {
  j = Json{{"correlation_id", job.correlation_id},
           {"user_id", job.user_id},
           {"status", to_string(job.status)},
           {"submitted_at", job.submitted_at}};
  if (job.completed_at) j["completed_at"] = *job.completed_at;
  if (job.result) j["result"] = *job.result;
  if (job.error_detail) j["error_detail"] = *job.error_detail;
}

void from_json(const Json& j, PredictionJob& job) {
  j.at("correlation_id").get_to(job.correlation_id);
  j.at("user_id").get_to(job.user_id);
  auto status = job_status_from_string(j.at("status").get<std::string>());
  if (!status) throw Json::other_error::create(501, "unknown job status", &j);
  job.status = *status;
  j.at("submitted_at").get_to(job.submitted_at);
  job.completed_at.reset();
  job.result.reset();
  job.error_detail.reset();
  if (j.contains("completed_at")) job.completed_at = j["completed_at"].get<Millis>();
  if (j.contains("result")) job.result = j["result"].get<PredictionRecord>();
  if (j.contains("error_detail")) job.error_detail = j["error_detail"].get<std::string>();
}

}  // namespace shardline

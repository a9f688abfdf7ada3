#include "shardline/predictor.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <thread>

namespace shardline {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::string explanation_for(const char* factor, double contribution) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s contributes %+.3f to the risk score", factor,
                contribution);
  return buf;
}

}  // namespace

FeatureVector normalize_features(const ProfileRecord& profile,
                                 const std::vector<ActivityRecord>& recent_activities) {
  std::optional<ActivityRecord> smoking, exercise;
  for (const auto& a : recent_activities) {
    auto& slot = (a.kind == ActivityKind::smoking) ? smoking : exercise;
    if (!slot || a.recorded_at > slot->recorded_at ||
        (a.recorded_at == slot->recorded_at && a.activity_id > slot->activity_id))
      slot = a;
  }
  FeatureVector f;
  f.x[0] = clamp01(profile.age / 120.0);
  f.x[1] = clamp01((profile.bmi - 10.0) / 60.0);
  f.x[2] = clamp01((profile.cholesterol_level - 80.0) / 420.0);
  f.x[3] = profile.hypertension ? 1.0 : 0.0;
  f.x[4] = profile.macrosomic_baby_history ? 1.0 : 0.0;
  f.x[5] = profile.family_history_diabetes ? 1.0 : 0.0;
  f.x[6] = clamp01(profile.smoking_years / 100.0);
  f.x[7] = smoking ? clamp01(static_cast<double>(smoking->quantity) / 40.0) : 0.0;
  f.x[8] = exercise ? clamp01(static_cast<double>(exercise->quantity) / 14.0) : 0.0;
  return f;
}

PredictionRecord score_features(const FeatureVector& features, const ModelConfig& config) {
  PredictionRecord rec;
  rec.model_version = config.model_version;
  double sum = 0.0;
  for (std::size_t i = 0; i < kFactorCount; ++i) {
    const double contribution = config.weights[i] * features.x[i];
    sum += contribution;
    rec.factors[i].contribution = contribution;
    rec.factors[i].impact = impact_for(contribution);
    rec.factors[i].explanation = explanation_for(kFactorNames[i], contribution);
  }
  rec.risk_score = sigmoid(config.bias + sum);
  return rec;
}

PredictionRecord Scorer::predict(const FeatureVector& features) const {
  if (config_.inference_delay_ms > 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(config_.inference_delay_ms));
  return score_features(features, config_);
}

Json make_prediction_request(const std::string& correlation_id, UserId user_id,
                             const FeatureVector& features) {
  return Json{{"correlation_id", correlation_id},
              {"user_id", user_id},
              {"features", Json(features)}};
}

Json make_prediction_response(const std::string& correlation_id, UserId user_id,
                              const PredictionRecord& record) {
  return Json{{"correlation_id", correlation_id},
              {"user_id", user_id},
              {"record", Json(record)}};
}

Json make_prediction_error(const std::string& correlation_id, UserId user_id,
                           const std::string& error) {
  return Json{{"correlation_id", correlation_id}, {"user_id", user_id}, {"error", error}};
}

void to_json(Json& j, const FeatureVector& f) {
  j = Json::object();
  for (std::size_t i = 0; i < kFactorCount; ++i) j[kFactorNames[i]] = f.x[i];
}

void from_json(const Json& j, FeatureVector& f) {
  for (std::size_t i = 0; i < kFactorCount; ++i)
    f.x[i] = std::clamp(j.value(kFactorNames[i], 0.0), 0.0, 1.0);
}

void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"bias", c.bias},
           {"weights", c.weights},
           {"inference_delay_ms", c.inference_delay_ms},
           {"worker_slots", c.worker_slots},
           {"model_version", c.model_version},
           {"request_timeout_ms", c.request_timeout_ms}};
}

void from_json(const Json& j, ModelConfig& c) {
  ModelConfig defaults;
  c.bias = j.value("bias", defaults.bias);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    for (std::size_t i = 0; i < kFactorCount && i < w.size(); ++i)
      c.weights[i] = w[i].get<double>();
  }
  c.inference_delay_ms = j.value("inference_delay_ms", defaults.inference_delay_ms);
  c.worker_slots = j.value("worker_slots", defaults.worker_slots);
  c.model_version = j.value("model_version", defaults.model_version);
  c.request_timeout_ms = j.value("request_timeout_ms", defaults.request_timeout_ms);
}

}  // namespace shardline

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "shardline/domain.hpp"
#include "shardline/json_util.hpp"

namespace shardline {

// Normalized inputs in [0,1], one per factor in kFactorNames order.
struct FeatureVector {
  std::array<double, kFactorCount> x{};

  bool operator==(const FeatureVector&) const = default;
};

// Stand-in logistic model. The factor weights and bias are fixed defaults so
// identical inputs always score identically; nothing here is a trained
// model.
struct ModelConfig {
  double bias = -2.0;
  std::array<double, kFactorCount> weights = {1.2, 1.5, 0.8, 0.9, 0.5,
                                              1.0, 1.1, 0.6, -0.7};
  Millis inference_delay_ms = 80;   // simulated inference + explanation cost
  int worker_slots = 8;
  std::string model_version = "standin-logistic-1";
  Millis request_timeout_ms = 2000;  // sync mode: max wait for a free slot

  bool operator==(const ModelConfig&) const = default;
};

// Profile fields and the latest activity of each kind, scaled onto [0,1]:
// age/120, (bmi-10)/60, (cholesterol-80)/420, booleans to {0,1},
// smoking_years/100, cigarettes-per-day/40, exercise-sessions-per-week/14;
// everything clamped to [0,1]. Missing activities contribute 0.
FeatureVector normalize_features(const ProfileRecord& profile,
                                 const std::vector<ActivityRecord>& recent_activities);

// Pure scoring: contribution_i = w_i * x_i, risk = sigmoid(bias + sum).
// prediction_id/user_id/timestamps are left at 0 for the caller to fill.
PredictionRecord score_features(const FeatureVector& features, const ModelConfig& config);

// Scoring plus the simulated inference delay.
class Scorer {
public:
  explicit Scorer(ModelConfig config) : config_(std::move(config)) {}
  PredictionRecord predict(const FeatureVector& features) const;
  const ModelConfig& config() const { return config_; }

private:
  ModelConfig config_;
};

// Queue payload shapes shared by the back-end and the prediction service.
Json make_prediction_request(const std::string& correlation_id, UserId user_id,
                             const FeatureVector& features);
Json make_prediction_response(const std::string& correlation_id, UserId user_id,
                              const PredictionRecord& record);
Json make_prediction_error(const std::string& correlation_id, UserId user_id,
                           const std::string& error);

void to_json(Json& j, const FeatureVector& f);
void from_json(const Json& j, FeatureVector& f);
void to_json(Json& j, const ModelConfig& c);
void from_json(const Json& j, ModelConfig& c);

}  // namespace shardline

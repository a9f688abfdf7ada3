// Python bindings over the library's pure operations: scoring, feature
// normalization, validation, routing, cache keys and replay classification.
// JSON crosses the boundary as strings; the package wraps them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "shardline/auth.hpp"
#include "shardline/cache.hpp"
#include "shardline/domain.hpp"
#include "shardline/ids.hpp"
#include "shardline/json_util.hpp"
#include "shardline/loadgen.hpp"
#include "shardline/predictor.hpp"
#include "shardline/shard_router.hpp"

namespace py = pybind11;
using namespace shardline;

namespace {

std::string score_json(const std::string& features_json, const std::string& model_json) {
  FeatureVector f = Json::parse(features_json).get<FeatureVector>();
  ModelConfig cfg;
  if (!model_json.empty()) cfg = Json::parse(model_json).get<ModelConfig>();
  return Json(score_features(f, cfg)).dump();
}

std::string normalize_json(const std::string& profile_json,
                           const std::string& activities_json) {
  auto v = validate_profile(Json::parse(profile_json));
  if (!v.ok()) {
    std::string msg = "invalid profile:";
    for (const auto& e : v.errors) msg += " " + e.field + " not in " + e.allowed;
    throw std::invalid_argument(msg);
  }
  std::vector<ActivityRecord> acts;
  if (!activities_json.empty())
    acts = Json::parse(activities_json).get<std::vector<ActivityRecord>>();
  return Json(normalize_features(*v.record, acts)).dump();
}

std::string validate_profile_json(const std::string& candidate) {
  auto v = validate_profile(Json::parse(candidate));
  Json errs = Json::array();
  for (const auto& e : v.errors)
    errs.push_back({{"field", e.field}, {"allowed", e.allowed}});
  Json out = {{"ok", v.ok()}, {"errors", errs}};
  if (v.record) out["record"] = *v.record;
  return out.dump();
}

int route_user(std::int64_t user_id, int shards, std::int64_t capacity) {
  return ShardMap::uniform(shards, capacity).route(user_id);
}

std::string replay_csv(const std::string& path) {
  auto s = replay_metrics_csv(path);
  Json rows = Json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"name", r.name},
                    {"error_rate_pct", r.error_rate_pct},
                    {"avg_latency_ms", r.avg_latency_ms},
                    {"verdict", r.verdict}});
  return Json{{"rows", rows}, {"pass", s.pass}, {"partial", s.partial}, {"fail", s.fail}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "shardline core operations";
  m.attr("__version__") = SHARDLINE_VERSION;

  std::vector<std::string> names(kFactorNames.begin(), kFactorNames.end());
  m.attr("factor_names") = py::cast(names);

  m.def("sigmoid", &sigmoid, py::arg("x"));
  m.def("classify", &classify, py::arg("error_rate_pct"), py::arg("avg_latency_ms"),
        "PASS/PARTIAL/FAIL for a load report (both thresholds inclusive).");
  m.def("percentile_nearest_rank", &percentile_nearest_rank, py::arg("values"),
        py::arg("pct"));
  m.def("new_correlation_id", &new_correlation_id);
  m.def("canonical_json", &canonical_json, py::arg("text"),
        "Key-sorted, whitespace-free rendering of a JSON document.");
  m.def("cache_key", &TtlCache::make_key, py::arg("user_id"), py::arg("input_json"),
        "What-if cache key: canonicalized input hashed per user.");
  m.def("hash_password", &hash_password, py::arg("password"));
  m.def("verify_password", &verify_password, py::arg("password"), py::arg("stored"));
  m.def("score", &score_json, py::arg("features_json"), py::arg("model_json") = "",
        "Score a normalized feature vector; returns the prediction as JSON.");
  m.def("normalize", &normalize_json, py::arg("profile_json"),
        py::arg("activities_json") = "",
        "Profile + recent activities -> feature vector JSON, clamped to [0,1].");
  m.def("validate_profile", &validate_profile_json, py::arg("candidate_json"));
  m.def("route_user", &route_user, py::arg("user_id"), py::arg("shards") = 2,
        py::arg("capacity") = 5000, "Owning shard index under a uniform range map.");
  m.def("replay_metrics", &replay_csv, py::arg("path"),
        "Re-classify a captured metrics CSV; returns rows and verdict counts.");
}

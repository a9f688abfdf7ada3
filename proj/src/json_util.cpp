#include "shardline/json_util.hpp"

namespace shardline {

std::size_t count_json_leaves(const Json& j) {
  if (j.is_object() || j.is_array()) {
    std::size_t n = 0;
    for (const auto& child : j) n += count_json_leaves(child);
    return n;
  }
  return 1;
}

std::string canonical_json(const std::string& text) {
  // nlohmann objects keep keys sorted, so dump() is already canonical.
  return Json::parse(text).dump();
}

}  // namespace shardline

#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

namespace shardline {

using Json = nlohmann::json;

// Number of scalar leaves in a JSON document. Objects and arrays contribute
// the sum of their children; empty containers contribute zero.
std::size_t count_json_leaves(const Json& j);

// Parses and re-serializes so that key order and whitespace differences
// disappear. Throws nlohmann::json::parse_error on malformed input.
std::string canonical_json(const std::string& text);

}  // namespace shardline

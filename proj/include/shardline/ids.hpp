#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace shardline {

// 128 random bits rendered as 32 lowercase hex characters. Collision
// probability for a million issuances is far below 2^-64.
std::string new_correlation_id();

bool looks_like_correlation_id(std::string_view s);

std::string to_hex(std::uint64_t value);

// FNV-1a, used for cache keys.
std::uint64_t fnv1a64(std::string_view data);

std::string random_hex(int bytes);

}  // namespace shardline

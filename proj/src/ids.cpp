#include "shardline/ids.hpp"

#include <array>
#include <atomic>
#include <random>

namespace shardline {

namespace {

std::uint64_t seed_mix() {
  static std::atomic<std::uint64_t> counter{0};
  std::random_device rd;
  std::uint64_t s = (std::uint64_t(rd()) << 32) ^ rd();
  s ^= counter.fetch_add(0x9e3779b97f4a7c15ULL) + 0x2545f4914f6cdd1dULL;
  return s;
}

std::mt19937_64& thread_rng() {
  thread_local std::mt19937_64 rng(seed_mix());
  return rng;
}

constexpr char kHexDigits[] = "0123456789abcdef";

void append_hex64(std::string& out, std::uint64_t v) {
  for (int shift = 60; shift >= 0; shift -= 4) {
    out.push_back(kHexDigits[(v >> shift) & 0xF]);
  }
}

}  // namespace

std::string new_correlation_id() {
  auto& rng = thread_rng();
  std::string out;
  out.reserve(32);
  append_hex64(out, rng());
  append_hex64(out, rng());
  return out;
}

bool looks_like_correlation_id(std::string_view s) {
  if (s.size() != 32) return false;
  for (char c : s) {
    bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    if (!ok) return false;
  }
  return true;
}

std::string to_hex(std::uint64_t value) {
  std::string out;
  append_hex64(out, value);
  // strip leading zeros but keep at least one digit
  auto pos = out.find_first_not_of('0');
  return pos == std::string::npos ? "0" : out.substr(pos);
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string random_hex(int bytes) {
  auto& rng = thread_rng();
  std::string out;
  out.reserve(static_cast<std::size_t>(bytes) * 2);
  for (int i = 0; i < bytes; ++i) {
    unsigned v = static_cast<unsigned>(rng() & 0xFF);
    out.push_back(kHexDigits[v >> 4]);
    out.push_back(kHexDigits[v & 0xF]);
  }
  return out;
}

}  // namespace shardline

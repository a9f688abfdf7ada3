#include "shardline/auth.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <cstring>

#include "shardline/ids.hpp"
#include "shardline/json_util.hpp"

namespace shardline {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

std::string to_hex_bytes(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(kHexDigits[data[i] >> 4]);
    out.push_back(kHexDigits[data[i] & 0xF]);
  }
  return out;
}

int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

std::optional<std::string> from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_val(hex[i]), lo = hex_val(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<char>(hi * 16 + lo));
  }
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return to_hex_bytes(digest, sizeof(digest));
}

std::string hmac_sha256_hex(const std::string& key, const std::string& data) {
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int mac_len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
       reinterpret_cast<const unsigned char*>(data.data()), data.size(), mac, &mac_len);
  return to_hex_bytes(mac, mac_len);
}

bool constant_time_equal(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  unsigned char acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc |= static_cast<unsigned char>(a[i]) ^ static_cast<unsigned char>(b[i]);
  return acc == 0;
}

}  // namespace

std::string hash_password(const std::string& password) {
  const std::string salt = random_hex(16);
  return "sha256$" + salt + "$" + sha256_hex(salt + password);
}

bool verify_password(const std::string& password, const std::string& stored) {
  // sha256$<salt>$<digest>
  auto first = stored.find('$');
  auto second = stored.find('$', first + 1);
  if (first == std::string::npos || second == std::string::npos) return false;
  if (stored.substr(0, first) != "sha256") return false;
  const std::string salt = stored.substr(first + 1, second - first - 1);
  const std::string digest = stored.substr(second + 1);
  return constant_time_equal(digest, sha256_hex(salt + password));
}

TokenSigner::TokenSigner(std::string secret, std::shared_ptr<Clock> clock, Millis ttl_ms)
    : secret_(std::move(secret)), clock_(std::move(clock)), ttl_ms_(ttl_ms) {}

std::string TokenSigner::issue(UserId user_id) const {
  Json payload = {{"uid", user_id}, {"exp", clock_->now_ms() + ttl_ms_}};
  const std::string body = payload.dump();
  const std::string body_hex =
      to_hex_bytes(reinterpret_cast<const unsigned char*>(body.data()), body.size());
  return body_hex + "." + hmac_sha256_hex(secret_, body_hex);
}

std::optional<UserId> TokenSigner::verify(const std::string& token) const {
  auto dot = token.find('.');
  if (dot == std::string::npos) return std::nullopt;
  const std::string body_hex = token.substr(0, dot);
  const std::string sig = token.substr(dot + 1);
  if (!constant_time_equal(sig, hmac_sha256_hex(secret_, body_hex))) return std::nullopt;
  auto body = from_hex(body_hex);
  if (!body) return std::nullopt;
  Json payload = Json::parse(*body, nullptr, /*allow_exceptions=*/false);
  if (payload.is_discarded() || !payload.contains("uid") || !payload.contains("exp"))
    return std::nullopt;
  if (payload["exp"].get<Millis>() <= clock_->now_ms()) return std::nullopt;
  return payload["uid"].get<UserId>();
}

}  // namespace shardline

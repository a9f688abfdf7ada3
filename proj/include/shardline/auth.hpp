#pragma once

#include <memory>
#include <optional>
#include <string>

#include "shardline/clock.hpp"
#include "shardline/domain.hpp"

namespace shardline {

// "sha256$<salt-hex>$<digest-hex>"; digest = SHA-256(salt || password).
std::string hash_password(const std::string& password);
bool verify_password(const std::string& password, const std::string& stored);

// Opaque bearer tokens: hex(payload-json) + "." + hex(HMAC-SHA256(secret,
// payload)). The payload carries user id and expiry.
class TokenSigner {
public:
  TokenSigner(std::string secret, std::shared_ptr<Clock> clock,
              Millis ttl_ms = 24LL * 3600 * 1000);

  std::string issue(UserId user_id) const;
  // User id, or nullopt for forged, malformed, or expired tokens.
  std::optional<UserId> verify(const std::string& token) const;

  Millis ttl_ms() const { return ttl_ms_; }

private:
  const std::string secret_;
  const std::shared_ptr<Clock> clock_;
  const Millis ttl_ms_;
};

}  // namespace shardline

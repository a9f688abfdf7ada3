#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "shardline/clock.hpp"

namespace shardline {

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

struct HttpResponse {
  int status = 0;  // 0 = transport failure or timeout
  std::string body;
  std::string content_type;
  HttpHeaders headers;
  std::string error;  // transport error description when status == 0

  bool transport_ok() const { return status > 0; }
  // First value of the named header, or "" when absent.
  std::string header(const std::string& name) const;
};

// Thin keep-alive HTTP/1.1 client; one instance per upstream connection.
class HttpClient {
public:
  HttpClient(std::string host, int port, Millis timeout_ms = 10000);
  ~HttpClient();
  HttpClient(const HttpClient&) = delete;
  HttpClient& operator=(const HttpClient&) = delete;

  HttpResponse get(const std::string& path, const HttpHeaders& headers = {});
  HttpResponse post(const std::string& path, const std::string& body,
                    const std::string& content_type = "application/json",
                    const HttpHeaders& headers = {});
  HttpResponse put(const std::string& path, const std::string& body,
                   const std::string& content_type = "application/json",
                   const HttpHeaders& headers = {});
  HttpResponse patch(const std::string& path, const std::string& body,
                     const std::string& content_type = "application/json",
                     const HttpHeaders& headers = {});
  HttpResponse del(const std::string& path, const HttpHeaders& headers = {});

  // Generic dispatch for proxying; method is an upper-case HTTP verb.
  HttpResponse request(const std::string& method, const std::string& path,
                       const std::string& body, const std::string& content_type,
                       const HttpHeaders& headers = {});

  void set_timeout(Millis timeout_ms);
  const std::string& host() const { return host_; }
  int port() const { return port_; }

private:
  struct Impl;
  std::string host_;
  int port_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace shardline

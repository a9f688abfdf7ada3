#include "shardline/http_client.hpp"

#include <httplib.h>

namespace shardline {

namespace {

void apply_timeout(httplib::Client& c, Millis ms) {
  const time_t sec = ms / 1000;
  const time_t usec = (ms % 1000) * 1000;
  c.set_connection_timeout(sec, usec);
  c.set_read_timeout(sec, usec);
  c.set_write_timeout(sec, usec);
}

httplib::Headers to_httplib(const HttpHeaders& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

HttpResponse from_result(httplib::Result&& result) {
  HttpResponse r;
  if (!result) {
    r.status = 0;
    r.error = httplib::to_string(result.error());
    return r;
  }
  r.status = result->status;
  r.body = result->body;
  r.content_type = result->get_header_value("Content-Type");
  for (const auto& [k, v] : result->headers) r.headers.emplace_back(k, v);
  return r;
}

}  // namespace

std::string HttpResponse::header(const std::string& name) const {
  for (const auto& [k, v] : headers)
    if (k == name) return v;
  return "";
}

struct HttpClient::Impl {
  Impl(const std::string& host, int port, Millis timeout_ms) : client(host, port) {
    client.set_keep_alive(true);
    apply_timeout(client, timeout_ms);
  }
  httplib::Client client;
};

HttpClient::HttpClient(std::string host, int port, Millis timeout_ms)
    : host_(std::move(host)), port_(port),
      impl_(std::make_unique<Impl>(host_, port_, timeout_ms)) {}

HttpClient::~HttpClient() = default;

void HttpClient::set_timeout(Millis timeout_ms) { apply_timeout(impl_->client, timeout_ms); }

HttpResponse HttpClient::get(const std::string& path, const HttpHeaders& headers) {
  return from_result(impl_->client.Get(path, to_httplib(headers)));
}

HttpResponse HttpClient::post(const std::string& path, const std::string& body,
                              const std::string& content_type, const HttpHeaders& headers) {
  return from_result(impl_->client.Post(path, to_httplib(headers), body, content_type));
}

HttpResponse HttpClient::put(const std::string& path, const std::string& body,
                             const std::string& content_type, const HttpHeaders& headers) {
  return from_result(impl_->client.Put(path, to_httplib(headers), body, content_type));
}

HttpResponse HttpClient::patch(const std::string& path, const std::string& body,
                               const std::string& content_type, const HttpHeaders& headers) {
  return from_result(impl_->client.Patch(path, to_httplib(headers), body, content_type));
}

HttpResponse HttpClient::del(const std::string& path, const HttpHeaders& headers) {
  return from_result(impl_->client.Delete(path, to_httplib(headers)));
}

HttpResponse HttpClient::request(const std::string& method, const std::string& path,
                                 const std::string& body, const std::string& content_type,
                                 const HttpHeaders& headers) {
  if (method == "GET") return get(path, headers);
  if (method == "POST") return post(path, body, content_type, headers);
  if (method == "PUT") return put(path, body, content_type, headers);
  if (method == "PATCH") return patch(path, body, content_type, headers);
  if (method == "DELETE") return del(path, headers);
  HttpResponse r;
  r.status = 0;
  r.error = "unsupported method " + method;
  return r;
}

}  // namespace shardline

#include "sonogrid/net/http.hpp"

#include "sonogrid/errors.hpp"

#include "httplib.h"

#include <sys/socket.h>

#include <charconv>

namespace sonogrid::net {

namespace {

HttpResult to_result(const httplib::Result& res) {
  HttpResult out;
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  if (text.starts_with("http://")) text.remove_prefix(7);
  while (!text.empty() && text.back() == '/') text.remove_suffix(1);
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ValidationError("endpoint '" + std::string(text) + "' must be host:port");
  }
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  const auto port_text = text.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), ep.port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || ep.port < 0 ||
      ep.port > 65535) {
    throw ValidationError("endpoint '" + std::string(text) + "' has an invalid port");
  }
  return ep;
}

void exclusive_listener_options(int sock) {
  int yes = 1;
  ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
}

std::string Endpoint::url() const { return "http://" + host + ":" + std::to_string(port); }

std::string url_encode(std::string_view text) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string rtdb_target(std::string_view path, std::string_view token) {
  std::string target(path);
  while (target.size() > 1 && target.back() == '/') target.pop_back();
  if (target.empty() || target == "/") target.clear();
  if (!target.empty() && target.front() != '/') target.insert(target.begin(), '/');
  return (target.empty() ? std::string("/") : target) + ".json?auth=" + url_encode(token);
}

struct HttpClient::Impl {
  httplib::Client client;
  Impl(const Endpoint& ep, std::chrono::milliseconds timeout) : client(ep.host, ep.port) {
    const auto sec = static_cast<time_t>(timeout.count() / 1000);
    const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    client.set_keep_alive(true);
  }
};

HttpClient::HttpClient(const Endpoint& endpoint, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(endpoint, timeout)) {}
HttpClient::~HttpClient() = default;
HttpClient::HttpClient(HttpClient&&) noexcept = default;
HttpClient& HttpClient::operator=(HttpClient&&) noexcept = default;

HttpResult HttpClient::get(const std::string& target,
                           const std::map<std::string, std::string>& headers) {
  httplib::Headers h(headers.begin(), headers.end());
  return to_result(impl_->client.Get(target, h));
}

HttpResult HttpClient::put(const std::string& target, const std::string& body) {
  return to_result(impl_->client.Put(target, body, "application/json"));
}

HttpResult HttpClient::patch(const std::string& target, const std::string& body) {
  return to_result(impl_->client.Patch(target, body, "application/json"));
}

HttpResult HttpClient::del(const std::string& target) {
  return to_result(impl_->client.Delete(target));
}

}  // namespace sonogrid::net

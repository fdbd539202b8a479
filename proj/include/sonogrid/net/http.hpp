#pragma once

// Small HTTP client surface shared by node agents, the exporter and tests.
// cpp-httplib stays behind the implementation files.

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace sonogrid::net {

struct HttpResult {
  int status = 0;  // 0 = transport failure (connect refused, timeout, ...)
  std::string body;
  std::string error;

  bool ok() const { return status >= 200 && status < 300; }
  bool transport_failure() const { return status == 0; }
};

struct Endpoint {
  std::string host;
  int port = 0;

  /// Accepts "host:port", "http://host:port" and "http://host:port/".
  static Endpoint parse(std::string_view text);
  std::string url() const;
};

class HttpClient {
 public:
  explicit HttpClient(const Endpoint& endpoint,
                      std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));
  ~HttpClient();
  HttpClient(HttpClient&&) noexcept;
  HttpClient& operator=(HttpClient&&) noexcept;

  HttpResult get(const std::string& target, const std::map<std::string, std::string>& headers = {});
  HttpResult put(const std::string& target, const std::string& body);
  HttpResult patch(const std::string& target, const std::string& body);
  HttpResult del(const std::string& target);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// `/{path}.json?auth=TOKEN` with the token query-encoded.
std::string rtdb_target(std::string_view path, std::string_view token);

std::string url_encode(std::string_view text);

/// Listener socket setup: SO_REUSEADDR without SO_REUSEPORT, so binding a
/// port another process is listening on fails.
void exclusive_listener_options(int sock);

}  // namespace sonogrid::net

#pragma once

#include "sonogrid/rtdb/database.hpp"

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

namespace sonogrid::rtdb {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::chrono::milliseconds keepalive{30000};
  std::size_t worker_threads = 64;  // each open event stream pins one worker
};

/// REST + server-sent-events front end for a Database:
///   GET/PUT/PATCH/DELETE /{path}.json?auth=TOKEN
///   GET with "Accept: text/event-stream" streams put/patch events.
class RtdbServer {
 public:
  RtdbServer(Database& db, ServerOptions options);
  ~RtdbServer();

  RtdbServer(const RtdbServer&) = delete;
  RtdbServer& operator=(const RtdbServer&) = delete;

  /// Binds and starts serving on a background thread. Throws std::runtime_error
  /// if the address cannot be bound. Returns the bound port.
  int start();
  void stop();

  int port() const { return port_; }
  const std::string& host() const { return options_.host; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServerOptions options_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace sonogrid::rtdb

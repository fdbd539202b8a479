#pragma once

// How the mapper reaches the database: in-process or over HTTP.

#include "sonogrid/net/http.hpp"
#include "sonogrid/rtdb/database.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace sonogrid::mapper {

/// The change feed ended (overflow, disconnect, database gone). The
/// consumer reopens it, which starts over from a fresh snapshot.
struct FeedLost : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Feed {
 public:
  virtual ~Feed() = default;
  /// nullopt on timeout; throws FeedLost.
  virtual std::optional<rtdb::Event> next(std::chrono::milliseconds timeout) = 0;
};

class RtdbLink {
 public:
  virtual ~RtdbLink() = default;
  /// Subscription rooted at /nodes; the first event is the snapshot.
  virtual std::unique_ptr<Feed> open_nodes_feed() = 0;
  /// Point read; throws std::runtime_error when the database cannot be reached.
  virtual rtdb::json read(const rtdb::Path& path) = 0;
};

std::unique_ptr<RtdbLink> local_link(rtdb::Database& db, std::string token);
std::unique_ptr<RtdbLink> remote_link(const net::Endpoint& endpoint, std::string token);

}  // namespace sonogrid::mapper

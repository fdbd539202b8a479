#pragma once

#include "sonogrid/bounded_queue.hpp"
#include "sonogrid/rtdb/journal.hpp"
#include "sonogrid/rtdb/path.hpp"
#include "sonogrid/rtdb/tree.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace sonogrid::rtdb {

/// Change notification delivered to a subscriber. `path` is relative to the
/// subscription root.
struct Event {
  std::uint64_t seq = 0;
  Verb kind = Verb::kPut;
  Path path;
  json data;
};

/// `{"path":"/rel","data":...}` with keys in that order; the SSE data line payload.
std::string event_payload(const Event& event);

/// Applies an event to a subscriber-side mirror of the subscribed subtree.
void fold_event(json& mirror, const Event& event);

class SubscriptionOverflow : public std::runtime_error {
 public:
  SubscriptionOverflow() : std::runtime_error("subscriber buffer overflow") {}
};

class Subscription {
 public:
  Subscription(Path root, std::uint64_t fence, std::size_t capacity)
      : root_(std::move(root)), fence_(fence), queue_(capacity) {}

  const Path& root() const { return root_; }
  /// Sequence number of the snapshot event; every later event has seq > fence.
  std::uint64_t fence() const { return fence_; }

  /// Next event, or nullopt on timeout / after close(). Throws
  /// SubscriptionOverflow once the buffer has overflowed.
  template <typename Rep, typename Period>
  std::optional<Event> next(std::chrono::duration<Rep, Period> timeout) {
    if (queue_.overflowed()) throw SubscriptionOverflow();
    auto e = queue_.pop_for(timeout);
    if (!e && queue_.overflowed()) throw SubscriptionOverflow();
    return e;
  }

  bool overflowed() const { return queue_.overflowed(); }
  bool closed() const { return queue_.closed(); }
  void close() { queue_.close(); }

 private:
  friend class Database;
  bool deliver(Event e) { return queue_.push(std::move(e)); }

  Path root_;
  std::uint64_t fence_;
  BoundedQueue<Event> queue_;
};

struct DatabaseOptions {
  std::string auth_token;
  std::optional<std::filesystem::path> journal;
  std::size_t subscriber_buffer = 10000;
  bool sync_writes = true;
  std::function<std::int64_t()> now_ms;  // defaults to the system clock
};

struct WriteAck {
  std::uint64_t seq = 0;
  json echo;  // stored value for put, merge input for patch
};

/// Real-time JSON tree. Writes are totally ordered by one commit lane and
/// journaled before they are acknowledged; reads run concurrently with each
/// other and see the tree after some prefix of that order.
class Database {
 public:
  explicit Database(DatabaseOptions options);
  ~Database();

  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;

  WriteAck put(const Path& path, const json& value, std::string_view token);
  WriteAck patch(const Path& path, const json& fields, std::string_view token);
  WriteAck remove(const Path& path, std::string_view token) { return put(path, nullptr, token); }
  json get(const Path& path, std::string_view token) const;

  /// The first queued event is a put at "/" with the current subtree.
  std::shared_ptr<Subscription> subscribe(const Path& path, std::string_view token);

  /// Rewrites the journal as one snapshot record. No-op without a journal.
  void compact();

  std::uint64_t last_seq() const;
  std::size_t subscriber_count() const;
  bool authorized(std::string_view token) const;

 private:
  WriteAck commit(Verb verb, const Path& path, json body, json echo);
  void fan_out(const WriteRecord& record);

  DatabaseOptions options_;
  std::unique_ptr<Journal> journal_;

  std::mutex commit_mutex_;          // single writer lane
  mutable std::shared_mutex tree_mutex_;  // guards tree_, seq, subscribers_
  json tree_;
  std::uint64_t last_seq_ = 0;
  std::int64_t last_ts_ = 0;
  std::vector<std::weak_ptr<Subscription>> subscribers_;
};

}  // namespace sonogrid::rtdb

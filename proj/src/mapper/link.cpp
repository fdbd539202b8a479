#include "sonogrid/mapper/link.hpp"

#include "sonogrid/bounded_queue.hpp"
#include "sonogrid/net/sse.hpp"

#include <atomic>
#include <thread>

namespace sonogrid::mapper {

namespace {

class LocalFeed final : public Feed {
 public:
  explicit LocalFeed(std::shared_ptr<rtdb::Subscription> sub) : sub_(std::move(sub)) {}
  ~LocalFeed() override { sub_->close(); }

  std::optional<rtdb::Event> next(std::chrono::milliseconds timeout) override {
    try {
      auto e = sub_->next(timeout);
      if (!e && sub_->closed()) throw FeedLost("subscription closed");
      return e;
    } catch (const rtdb::SubscriptionOverflow&) {
      throw FeedLost("subscription overflowed");
    }
  }

 private:
  std::shared_ptr<rtdb::Subscription> sub_;
};

class LocalLink final : public RtdbLink {
 public:
  LocalLink(rtdb::Database& db, std::string token) : db_(db), token_(std::move(token)) {}

  std::unique_ptr<Feed> open_nodes_feed() override {
    return std::make_unique<LocalFeed>(db_.subscribe(rtdb::Path::parse("/nodes"), token_));
  }
  rtdb::json read(const rtdb::Path& path) override { return db_.get(path, token_); }

 private:
  rtdb::Database& db_;
  std::string token_;
};

constexpr std::size_t kRemoteBuffer = 100'000;

class RemoteFeed final : public Feed {
 public:
  RemoteFeed(const net::Endpoint& endpoint, const std::string& token)
      : stream_(endpoint, net::rtdb_target("/nodes", token)), queue_(kRemoteBuffer) {
    worker_ = std::thread([this] {
      stream_.run([this](const net::SseMessage& m) { return on_message(m); });
      ended_ = true;
    });
  }
  ~RemoteFeed() override {
    stream_.stop();
    if (worker_.joinable()) worker_.join();
  }

  std::optional<rtdb::Event> next(std::chrono::milliseconds timeout) override {
    if (auto e = queue_.try_pop()) return e;
    if (queue_.overflowed()) throw FeedLost("remote feed overflowed");
    if (ended_) throw FeedLost("remote stream ended");
    auto e = queue_.pop_for(timeout);
    if (!e && queue_.overflowed()) throw FeedLost("remote feed overflowed");
    return e;
  }

 private:
  bool on_message(const net::SseMessage& m) {
    rtdb::Verb verb;
    if (m.event == "put") {
      verb = rtdb::Verb::kPut;
    } else if (m.event == "patch") {
      verb = rtdb::Verb::kPatch;
    } else {
      return true;
    }
    try {
      const auto payload = rtdb::json::parse(m.data);
      rtdb::Event e{0, verb, rtdb::Path::parse(payload.at("path").get<std::string>()), payload.at("data")};
      return queue_.push(std::move(e));
    } catch (const std::exception&) {
      return false;  // a malformed frame means we no longer trust the stream
    }
  }

  net::SseStream stream_;
  BoundedQueue<rtdb::Event> queue_;
  std::atomic<bool> ended_{false};
  std::thread worker_;
};

class RemoteLink final : public RtdbLink {
 public:
  RemoteLink(const net::Endpoint& endpoint, std::string token)
      : endpoint_(endpoint), token_(std::move(token)), client_(endpoint, std::chrono::seconds(5)) {}

  std::unique_ptr<Feed> open_nodes_feed() override { return std::make_unique<RemoteFeed>(endpoint_, token_); }

  rtdb::json read(const rtdb::Path& path) override {
    std::lock_guard lock(mutex_);
    const auto r = client_.get(net::rtdb_target(path.str(), token_));
    if (!r.ok()) {
      throw std::runtime_error(r.transport_failure() ? "database unreachable: " + r.error
                                                     : "database returned HTTP " + std::to_string(r.status));
    }
    return rtdb::json::parse(r.body);
  }

 private:
  net::Endpoint endpoint_;
  std::string token_;
  std::mutex mutex_;
  net::HttpClient client_;
};

}  // namespace

std::unique_ptr<RtdbLink> local_link(rtdb::Database& db, std::string token) {
  return std::make_unique<LocalLink>(db, std::move(token));
}

std::unique_ptr<RtdbLink> remote_link(const net::Endpoint& endpoint, std::string token) {
  return std::make_unique<RemoteLink>(endpoint, std::move(token));
}

}  // namespace sonogrid::mapper

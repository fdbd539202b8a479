#include "sonogrid/net/sse.hpp"

#include "httplib.h"

#include <atomic>

namespace sonogrid::net {

std::string format_sse(std::string_view event, std::string_view data) {
  std::string out;
  out.reserve(event.size() + data.size() + 17);
  out += "event: ";
  out += event;
  out += "\ndata: ";
  out += data;
  out += "\n\n";
  return out;
}

std::string format_sse_comment(std::string_view text) {
  return ": " + std::string(text) + "\n\n";
}

void SseParser::consume_line(std::string_view line) {
  if (line.front() == ':') return;
  const auto colon = line.find(':');
  std::string_view field = line.substr(0, colon);
  std::string_view value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);
  if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
  if (field == "event") {
    event_ = value;
  } else if (field == "data") {
    if (has_data_) data_ += '\n';
    data_ += value;
    has_data_ = true;
  }
}

struct SseStream::Impl {
  httplib::Client client;
  std::string target;
  std::atomic<bool> stopped{false};

  Impl(const Endpoint& ep, std::string t, std::chrono::milliseconds read_timeout)
      : client(ep.host, ep.port), target(std::move(t)) {
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(static_cast<time_t>(read_timeout.count() / 1000),
                            static_cast<time_t>((read_timeout.count() % 1000) * 1000));
  }
};

SseStream::SseStream(const Endpoint& endpoint, std::string target,
                     std::chrono::milliseconds read_timeout)
    : impl_(std::make_unique<Impl>(endpoint, std::move(target), read_timeout)) {}

SseStream::~SseStream() = default;

int SseStream::run(const std::function<bool(const SseMessage&)>& on_message) {
  SseParser parser;
  int status = 0;
  httplib::Headers headers{{"Accept", "text/event-stream"}};
  auto res = impl_->client.Get(
      impl_->target, headers,
      [&](const httplib::Response& response) {
        status = response.status;
        return response.status == 200 && !impl_->stopped;
      },
      [&](const char* data, std::size_t len) {
        bool keep_going = !impl_->stopped;
        parser.feed(std::string_view(data, len), [&](const SseMessage& m) {
          if (keep_going && !on_message(m)) keep_going = false;
        });
        return keep_going && !impl_->stopped;
      });
  (void)res;
  return status;
}

void SseStream::stop() {
  impl_->stopped = true;
  impl_->client.stop();
}

}  // namespace sonogrid::net

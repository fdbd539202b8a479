#pragma once

#include "sonogrid/net/http.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace sonogrid::net {

struct SseMessage {
  std::string event;  // "message" when the frame has no event line
  std::string data;
};

/// Frames one event: "event: NAME\ndata: DATA\n\n".
std::string format_sse(std::string_view event, std::string_view data);
std::string format_sse_comment(std::string_view text);

/// Incremental text/event-stream decoder. Comment lines are ignored;
/// multi-line data fields are joined with '\n'.
class SseParser {
 public:
  template <typename F>
  void feed(std::string_view chunk, F&& on_message) {
    buffer_.append(chunk);
    std::size_t pos;
    while ((pos = buffer_.find('\n')) != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) {
        if (has_data_) on_message(SseMessage{event_.empty() ? "message" : event_, data_});
        event_.clear();
        data_.clear();
        has_data_ = false;
      } else {
        consume_line(line);
      }
    }
  }

 private:
  void consume_line(std::string_view line);

  std::string buffer_;
  std::string event_;
  std::string data_;
  bool has_data_ = false;
};

/// Blocking SSE GET. `run` returns when the server ends the stream, the
/// callback returns false, the connection fails, or `stop()` is called from
/// another thread. Returns the HTTP status of the response (0 on transport failure).
class SseStream {
 public:
  SseStream(const Endpoint& endpoint, std::string target,
            std::chrono::milliseconds read_timeout = std::chrono::milliseconds(60000));
  ~SseStream();

  int run(const std::function<bool(const SseMessage&)>& on_message);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sonogrid::net

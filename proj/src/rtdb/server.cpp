#include "sonogrid/rtdb/server.hpp"

#include "sonogrid/errors.hpp"
#include "sonogrid/net/sse.hpp"

#include "httplib.h"

#include <stdexcept>

namespace sonogrid::rtdb {

namespace {

using namespace std::chrono_literals;

constexpr const char* kJson = "application/json";
constexpr std::size_t kMaxEventsPerChunk = 256;

std::string token_of(const httplib::Request& req) {
  if (req.has_param("auth")) return req.get_param_value("auth");
  const auto header = req.get_header_value("Authorization");
  constexpr std::string_view bearer = "Bearer ";
  if (header.starts_with(bearer)) return header.substr(bearer.size());
  return {};
}

void reply_error(httplib::Response& res, int status, const char* code) {
  res.status = status;
  res.set_content(json{{"error", code}}.dump(), kJson);
}

std::string frame(const Event& e) {
  return net::format_sse(to_string(e.kind), event_payload(e));
}

}  // namespace

struct RtdbServer::Impl {
  Database& db;
  httplib::Server server;
  std::atomic<bool> stopping{false};
  std::chrono::milliseconds keepalive;

  Impl(Database& d, const ServerOptions& options) : db(d), keepalive(options.keepalive) {
    const std::size_t threads = options.worker_threads;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server.set_keep_alive_max_count(100000);
    server.set_keep_alive_timeout(1);  // idle connections delay stop() by up to this long
    install_routes();
  }

  template <typename F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const AuthError&) {
      reply_error(res, 401, "unauthorized");
    } catch (const ValidationError&) {
      reply_error(res, 400, "bad_request");
    } catch (const json::exception&) {
      reply_error(res, 400, "bad_request");
    } catch (const std::exception&) {
      reply_error(res, 500, "internal");
    }
  }

  void install_routes() {
    const std::string pattern = R"((/.*)\.json)";

    server.Get(pattern, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Path path = Path::parse(req.matches[1].str());
        if (req.get_header_value("Accept").find("text/event-stream") != std::string::npos) {
          stream(path, token_of(req), res);
        } else {
          res.set_content(db.get(path, token_of(req)).dump(), kJson);
        }
      });
    });

    server.Put(pattern, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Path path = Path::parse(req.matches[1].str());
        const std::string token = token_of(req);
        if (!db.authorized(token)) throw AuthError();
        const json body = json::parse(req.body);
        res.set_content(db.put(path, body, token).echo.dump(), kJson);
      });
    });

    server.Patch(pattern, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Path path = Path::parse(req.matches[1].str());
        const std::string token = token_of(req);
        if (!db.authorized(token)) throw AuthError();
        const json body = json::parse(req.body);
        res.set_content(db.patch(path, body, token).echo.dump(), kJson);
      });
    });

    server.Delete(pattern, [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Path path = Path::parse(req.matches[1].str());
        db.remove(path, token_of(req));
        res.set_content("null", kJson);
      });
    });
  }

  void stream(const Path& path, const std::string& token, httplib::Response& res) {
    auto sub = db.subscribe(path, token);
    res.set_header("Cache-Control", "no-cache");
    auto last_write = std::chrono::steady_clock::now();
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, sub, last_write](std::size_t, httplib::DataSink& sink) mutable {
          while (!stopping) {
            if (!sink.is_writable()) return false;
            std::string out;
            try {
              for (auto e = sub->next(100ms); e; e = sub->next(0ms)) {
                out += frame(*e);
                if (out.size() > kMaxEventsPerChunk * 128) break;
              }
            } catch (const SubscriptionOverflow&) {
              out += net::format_sse_comment("overflow");
              sink.write(out.data(), out.size());
              sink.done();
              return true;
            }
            const auto now = std::chrono::steady_clock::now();
            if (out.empty() && now - last_write >= keepalive) out = net::format_sse_comment("keep-alive");
            if (!out.empty()) {
              last_write = now;
              return sink.write(out.data(), out.size());
            }
          }
          sink.done();
          return true;
        },
        [sub](bool) { sub->close(); });
  }
};

RtdbServer::RtdbServer(Database& db, ServerOptions options)
    : impl_(std::make_unique<Impl>(db, options)), options_(std::move(options)) {}

RtdbServer::~RtdbServer() { stop(); }

int RtdbServer::start() {
  impl_->server.set_socket_options(net::exclusive_listener_options);
  if (options_.port == 0) {
    port_ = impl_->server.bind_to_any_port(options_.host);
    if (port_ <= 0) throw std::runtime_error("cannot bind " + options_.host);
  } else {
    if (!impl_->server.bind_to_port(options_.host, options_.port)) {
      throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    port_ = options_.port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void RtdbServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace sonogrid::rtdb

#include "sonogrid/mapper/service.hpp"

#include "sonogrid/bounded_queue.hpp"
#include "sonogrid/errors.hpp"
#include "sonogrid/net/sse.hpp"

#include "httplib.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

namespace sonogrid::mapper {

namespace {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

constexpr const char* kJson = "application/json";

std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void reply_error(httplib::Response& res, int status, const char* code) {
  res.status = status;
  res.set_content(json{{"error", code}}.dump(), kJson);
}

/// Fan-out of pre-framed SSE text to every /api/stream client.
class Hub {
 public:
  using Queue = BoundedQueue<std::string>;

  std::shared_ptr<Queue> join(std::size_t capacity) {
    auto q = std::make_shared<Queue>(capacity);
    std::lock_guard lock(mutex_);
    clients_.push_back(q);
    return q;
  }

  void broadcast(const std::string& frame) {
    std::lock_guard lock(mutex_);
    std::erase_if(clients_, [&](const std::weak_ptr<Queue>& weak) {
      auto q = weak.lock();
      return !q || !q->push(frame);
    });
  }

  void close_all() {
    std::lock_guard lock(mutex_);
    for (auto& weak : clients_) {
      if (auto q = weak.lock()) q->close();
    }
    clients_.clear();
  }

  std::size_t size() {
    std::lock_guard lock(mutex_);
    return clients_.size();
  }

 private:
  std::mutex mutex_;
  std::vector<std::weak_ptr<Queue>> clients_;
};

}  // namespace

void validate(const MapperConfig& cfg) {
  validate(cfg.grid);
  validate(cfg.stops);
  validate(cfg.idw);
  if (cfg.stale_after_ms <= 0) throw ValidationError("stale_after_ms must be positive");
  if (cfg.recompute_interval <= 0ms) throw ValidationError("recompute interval must be positive");
  if (cfg.stream_buffer == 0) throw ValidationError("stream buffer must be positive");
}

struct MapperService::Impl {
  MapperConfig cfg;
  std::unique_ptr<RtdbLink> link;

  mutable std::mutex state_mutex;
  NodeRegistry registry;
  std::map<std::string, bool> announced_stale;

  mutable std::mutex grid_mutex;
  std::shared_ptr<const HeatGrid> grid;
  std::shared_ptr<const std::string> grid_json;

  std::atomic<std::uint64_t> ingested{0};
  std::atomic<bool> connected{false};
  std::atomic<bool> halt{false};

  std::mutex wake_mutex;
  std::condition_variable wake_cv;
  bool dirty = false;

  Hub hub;
  httplib::Server server;
  std::thread http_thread;
  std::thread consumer;
  std::thread recomputer;
  int port = 0;
  bool running = false;

  Impl(MapperConfig c, std::unique_ptr<RtdbLink> l) : cfg(std::move(c)), link(std::move(l)) {
    if (!cfg.now_ms) cfg.now_ms = system_now_ms;
    validate(cfg);
    if (!link) throw ValidationError("mapper needs a database link");
    server.new_task_queue = [] { return new httplib::ThreadPool(32); };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    if (cfg.static_dir && !server.set_mount_point("/", cfg.static_dir->string())) {
      throw ValidationError("static directory does not exist: " + cfg.static_dir->string());
    }
    install_routes();
  }

  std::string node_frame(const NodeState& s) { return net::format_sse("node", s.to_json().dump()); }

  // ---- ingest ----

  void consume() {
    while (!halt) {
      try {
        auto feed = link->open_nodes_feed();
        connected = true;
        while (!halt) {
          auto event = feed->next(200ms);
          if (!event) continue;
          apply(*event);
        }
      } catch (const std::exception&) {
        // FeedLost, unreachable database or a rejected token: retry with a fresh snapshot.
      }
      connected = false;
      for (int i = 0; i < 5 && !halt; ++i) std::this_thread::sleep_for(100ms);
    }
  }

  void apply(const rtdb::Event& event) {
    std::vector<NodeRegistry::Change> changes;
    const std::int64_t now = cfg.now_ms();
    {
      std::lock_guard lock(state_mutex);
      changes = registry.ingest(event);
      for (auto& c : changes) {
        if (c.state) {
          c.state->stale = is_stale(*c.state, now, cfg.stale_after_ms);
          announced_stale[c.node_id] = c.state->stale;
        } else {
          announced_stale.erase(c.node_id);
        }
      }
    }
    ++ingested;
    if (changes.empty()) return;
    for (const auto& c : changes) {
      hub.broadcast(c.state ? node_frame(*c.state)
                            : net::format_sse("remove", json{{"node_id", c.node_id}}.dump()));
    }
    {
      std::lock_guard lock(wake_mutex);
      dirty = true;
    }
    wake_cv.notify_one();
  }

  // ---- grid ----

  void recompute() {
    const std::int64_t now = cfg.now_ms();
    std::vector<NodeState> states;
    {
      std::lock_guard lock(state_mutex);
      states = registry.snapshot(now, cfg.stale_after_ms);
    }
    std::vector<NodeState> live;
    std::copy_if(states.begin(), states.end(), std::back_inserter(live), [](const NodeState& s) { return !s.stale; });
    auto next = std::make_shared<const HeatGrid>(idw_interpolate(live, cfg.grid, cfg.idw, now));
    auto text = std::make_shared<const std::string>(next->to_json().dump());
    {
      std::lock_guard lock(grid_mutex);
      grid = next;
      grid_json = text;
    }
    hub.broadcast(net::format_sse("grid", *text));

    std::vector<NodeState> flipped;
    {
      std::lock_guard lock(state_mutex);
      for (const auto& s : states) {
        auto it = announced_stale.find(s.node_id);
        if (it != announced_stale.end() && it->second != s.stale) {
          it->second = s.stale;
          flipped.push_back(s);
        }
      }
    }
    for (const auto& s : flipped) hub.broadcast(node_frame(s));
  }

  void recompute_loop() {
    auto last = Clock::now();
    std::unique_lock lock(wake_mutex);
    while (!halt) {
      wake_cv.wait_until(lock, last + cfg.recompute_interval, [&] { return halt.load() || dirty; });
      if (halt) break;
      if (dirty) {
        wake_cv.wait_until(lock, last + cfg.min_recompute_gap, [&] { return halt.load(); });
        if (halt) break;
      }
      dirty = false;
      lock.unlock();
      recompute();
      last = Clock::now();
      lock.lock();
    }
  }

  // ---- http ----

  template <typename F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const ValidationError&) {
      reply_error(res, 400, "bad_request");
    } catch (const std::exception&) {
      reply_error(res, 502, "upstream");
    }
  }

  json nodes_json() const {
    json arr = json::array();
    std::vector<NodeState> states;
    {
      std::lock_guard lock(state_mutex);
      states = registry.snapshot(cfg.now_ms(), cfg.stale_after_ms);
    }
    for (const auto& s : states) arr.push_back(s.to_json());
    return arr;
  }

  json config_json() const {
    return json{{"grid", cfg.grid.to_json()},
                {"stops", to_json(cfg.stops)},
                {"stale_after_ms", cfg.stale_after_ms},
                {"idw", {{"power", cfg.idw.power}, {"r_max_m", cfg.idw.r_max_m}, {"exact_m", cfg.idw.exact_m}}},
                {"recompute_interval_ms", cfg.recompute_interval.count()},
                {"keepalive_ms", cfg.keepalive.count()}};
  }

  void install_routes() {
    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      std::size_t n = 0;
      {
        std::lock_guard lock(state_mutex);
        n = registry.size();
      }
      res.set_content(json{{"status", "ok"}, {"feed", connected ? "connected" : "disconnected"}, {"nodes", n}}.dump(),
                      kJson);
    });

    server.Get("/api/nodes", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(nodes_json().dump(), kJson);
    });

    server.Get("/api/grid", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_ptr<const std::string> text;
      {
        std::lock_guard lock(grid_mutex);
        text = grid_json;
      }
      res.set_content(*text, kJson);
    });

    server.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(config_json().dump(), kJson);
    });

    server.Get(R"(/api/nodes/([^/]+)/log)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { serve_log(req, res); });
    });

    server.Get("/api/stream", [this](const httplib::Request&, httplib::Response& res) { stream(res); });
  }

  void serve_log(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1].str();
    if (!rtdb::is_valid_segment(id)) throw ValidationError("bad node id");
    std::size_t limit = cfg.log_limit_default;
    if (req.has_param("limit")) {
      const std::string text = req.get_param_value("limit");
      auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), limit);
      if (ec != std::errc{} || end != text.data() + text.size() || limit == 0) throw ValidationError("bad limit");
      limit = std::min(limit, cfg.log_limit_max);
    }
    const json log = link->read(rtdb::Path::parse("/nodes/" + id + "/log"));
    if (!log.is_object()) {
      bool known = false;
      {
        std::lock_guard lock(state_mutex);
        known = registry.find(id).has_value();
      }
      if (!known) return reply_error(res, 404, "not_found");
      res.set_content("[]", kJson);
      return;
    }
    std::vector<std::pair<std::uint64_t, json>> entries;
    for (const auto& [key, entry] : log.items()) {
      std::uint64_t seq = 0;
      auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), seq);
      if (ec != std::errc{} || end != key.data() + key.size() || !entry.is_object()) continue;
      entries.emplace_back(seq, json{{"seq", seq}, {"ts", entry.value("ts", json())}, {"spl_db", entry.value("spl_db", json())}});
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    json out = json::array();
    const std::size_t first = entries.size() > limit ? entries.size() - limit : 0;
    for (std::size_t i = first; i < entries.size(); ++i) out.push_back(std::move(entries[i].second));
    res.set_content(out.dump(), kJson);
  }

  void stream(httplib::Response& res) {
    auto queue = hub.join(cfg.stream_buffer);
    res.set_header("Cache-Control", "no-cache");
    auto last_write = Clock::now() - cfg.keepalive;  // first call flushes a comment so headers go out
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, queue, last_write](std::size_t, httplib::DataSink& sink) mutable {
          while (!halt) {
            if (!sink.is_writable()) return false;
            std::string out;
            for (auto frame = queue->pop_for(100ms); frame; frame = queue->try_pop()) {
              out += *frame;
              if (out.size() > (1u << 20)) break;
            }
            if (queue->overflowed()) {
              out = net::format_sse_comment("overflow");
              sink.write(out.data(), out.size());
              sink.done();
              return true;
            }
            if (queue->closed() && out.empty()) break;
            const auto now = Clock::now();
            if (out.empty() && now - last_write >= cfg.keepalive) out = net::format_sse_comment("keep-alive");
            if (!out.empty()) {
              last_write = now;
              return sink.write(out.data(), out.size());
            }
          }
          sink.done();
          return true;
        },
        [queue](bool) { queue->close(); });
  }
};

MapperService::MapperService(MapperConfig cfg, std::unique_ptr<RtdbLink> link)
    : impl_(std::make_unique<Impl>(std::move(cfg), std::move(link))) {}

MapperService::~MapperService() { stop(); }

int MapperService::start() {
  auto& m = *impl_;
  if (m.running) return m.port;
  m.recompute();
  m.server.set_socket_options(net::exclusive_listener_options);
  m.server.set_keep_alive_timeout(1);  // idle connections delay stop() by up to this long
  if (m.cfg.port == 0) {
    m.port = m.server.bind_to_any_port(m.cfg.host);
    if (m.port <= 0) throw std::runtime_error("cannot bind " + m.cfg.host);
  } else {
    if (!m.server.bind_to_port(m.cfg.host, m.cfg.port)) {
      throw std::runtime_error("cannot bind " + m.cfg.host + ":" + std::to_string(m.cfg.port));
    }
    m.port = m.cfg.port;
  }
  m.running = true;
  m.consumer = std::thread([&m] { m.consume(); });
  m.recomputer = std::thread([&m] { m.recompute_loop(); });
  m.http_thread = std::thread([&m] { m.server.listen_after_bind(); });
  m.server.wait_until_ready();
  return m.port;
}

void MapperService::stop() {
  auto& m = *impl_;
  if (!m.running) return;
  m.running = false;
  {
    std::lock_guard lock(m.wake_mutex);
    m.halt = true;
  }
  m.wake_cv.notify_all();
  m.hub.close_all();
  m.server.stop();
  if (m.http_thread.joinable()) m.http_thread.join();
  if (m.consumer.joinable()) m.consumer.join();
  if (m.recomputer.joinable()) m.recomputer.join();
}

int MapperService::port() const { return impl_->port; }

std::vector<NodeState> MapperService::nodes() const {
  std::lock_guard lock(impl_->state_mutex);
  return impl_->registry.snapshot(impl_->cfg.now_ms(), impl_->cfg.stale_after_ms);
}

std::shared_ptr<const HeatGrid> MapperService::grid() const {
  std::lock_guard lock(impl_->grid_mutex);
  return impl_->grid;
}

std::uint64_t MapperService::rejects() const {
  std::lock_guard lock(impl_->state_mutex);
  return impl_->registry.rejects();
}

std::uint64_t MapperService::events_ingested() const { return impl_->ingested; }
bool MapperService::feed_connected() const { return impl_->connected; }
nlohmann::json MapperService::config_json() const { return impl_->config_json(); }
void MapperService::recompute_now() { impl_->recompute(); }

}  // namespace sonogrid::mapper

#include "doctest.h"

#include "sonogrid/mapper/service.hpp"
#include "sonogrid/net/http.hpp"
#include "sonogrid/net/sse.hpp"
#include "sonogrid/rtdb/server.hpp"

#include <atomic>
#include <chrono>
#include <thread>

using namespace sonogrid;
using namespace sonogrid::mapper;
using namespace std::chrono_literals;
using rtdb::json;

namespace {

constexpr std::int64_t kNow = 1'700'000'000'000;

rtdb::DatabaseOptions memory_db() {
  rtdb::DatabaseOptions o;
  o.auth_token = "tok";
  return o;
}

MapperConfig test_config(std::atomic<std::int64_t>& now) {
  MapperConfig cfg;
  cfg.grid = GridSpec{{45.0600, 45.0728, 7.6600, 7.6856}, 32, 32};
  cfg.recompute_interval = 200ms;
  cfg.min_recompute_gap = 20ms;
  cfg.keepalive = 300ms;
  cfg.now_ms = [&now] { return now.load(); };
  return cfg;
}

json reading(const GridSpec& spec, int row, int col, double db, std::int64_t ts, std::uint64_t seq) {
  const auto [lat, lon] = spec.cell_center(row, col);
  return {{"node_id", "n"}, {"ts", ts}, {"spl_db", db}, {"lat", lat}, {"lon", lon}, {"seq", seq}};
}

template <typename F>
bool eventually(F&& pred, std::chrono::milliseconds limit = 3000ms) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(10ms);
  }
  return pred();
}

json get_json(net::HttpClient& c, const std::string& target, int expect = 200) {
  auto r = c.get(target);
  REQUIRE(r.status == expect);
  return json::parse(r.body);
}

}  // namespace

TEST_CASE("mapper http api over an in-process database") {
  std::atomic<std::int64_t> now{kNow};
  rtdb::Database db(memory_db());
  auto cfg = test_config(now);
  const GridSpec spec = cfg.grid;
  MapperService svc(cfg, local_link(db, "tok"));
  const int port = svc.start();
  net::HttpClient http(net::Endpoint{"127.0.0.1", port});

  CHECK(get_json(http, "/healthz")["status"] == "ok");
  CHECK(get_json(http, "/api/nodes") == json::array());
  auto grid = get_json(http, "/api/grid");
  CHECK(grid["values"].size() == 32 * 32);
  CHECK(grid["spec"]["rows"] == 32);
  CHECK(grid["values"][0].is_null());

  const auto config = get_json(http, "/api/config");
  CHECK(config["stops"][1]["rgba"] == json::array({220, 200, 0, 180}));
  CHECK(config["stale_after_ms"] == 10000);
  CHECK(config["grid"]["cols"] == 32);

  db.put(rtdb::Path::parse("/nodes/n1/latest"), reading(spec, 5, 7, 72.25, kNow, 1), "tok");
  db.put(rtdb::Path::parse("/nodes/n1/log/1"), reading(spec, 5, 7, 72.25, kNow, 1), "tok");
  REQUIRE(eventually([&] { return get_json(http, "/api/nodes").size() == 1; }));
  const auto nodes = get_json(http, "/api/nodes");
  CHECK(nodes[0]["node_id"] == "n1");
  CHECK(nodes[0]["latest_spl_db"] == 72.25);
  CHECK(nodes[0]["stale"] == false);

  REQUIRE(eventually([&] { return get_json(http, "/api/grid")["live_nodes"] == 1; }));
  grid = get_json(http, "/api/grid");
  CHECK(grid["values"][5 * 32 + 7] == 72.25);

  SUBCASE("log proxy") {
    for (std::uint64_t seq = 2; seq <= 12; ++seq) {
      db.put(rtdb::Path::parse("/nodes/n1/log/" + std::to_string(seq)),
             reading(spec, 5, 7, 60.0 + static_cast<double>(seq), kNow + 2000 * static_cast<std::int64_t>(seq), seq), "tok");
    }
    auto log = get_json(http, "/api/nodes/n1/log?limit=3");
    REQUIRE(log.size() == 3);
    CHECK(log[0]["seq"] == 10);
    CHECK(log[2]["seq"] == 12);
    CHECK(log[2]["spl_db"] == 72.0);
    CHECK(get_json(http, "/api/nodes/n1/log").size() == 12);
    CHECK(get_json(http, "/api/nodes/ghost/log", 404)["error"] == "not_found");
    CHECK(get_json(http, "/api/nodes/n1/log?limit=zero", 400)["error"] == "bad_request");
  }

  SUBCASE("staleness drops a silent node from the grid and a new reading restores it") {
    now = kNow + 10'001;
    REQUIRE(eventually([&] { return get_json(http, "/api/grid")["live_nodes"] == 0; }));
    CHECK(get_json(http, "/api/grid")["values"][5 * 32 + 7].is_null());
    CHECK(get_json(http, "/api/nodes")[0]["stale"] == true);

    db.put(rtdb::Path::parse("/nodes/n1/latest"), reading(spec, 5, 7, 66.5, kNow + 10'001, 2), "tok");
    REQUIRE(eventually([&] { return get_json(http, "/api/grid")["live_nodes"] == 1; }));
    CHECK(get_json(http, "/api/grid")["values"][5 * 32 + 7] == 66.5);
    CHECK(get_json(http, "/api/nodes")[0]["stale"] == false);
  }

  SUBCASE("malformed readings are counted, not applied") {
    db.put(rtdb::Path::parse("/nodes/n2/latest"), json{{"spl_db", 50}}, "tok");
    REQUIRE(eventually([&] { return svc.rejects() == 1; }));
    CHECK(get_json(http, "/api/nodes").size() == 1);
  }

  SUBCASE("stream forwards node upserts and grid refreshes") {
    net::SseStream stream(net::Endpoint{"127.0.0.1", port}, "/api/stream", 5000ms);
    std::atomic<int> grids{0};
    std::atomic<bool> saw_node{false};
    std::jthread reader([&] {
      stream.run([&](const net::SseMessage& m) {
        if (m.event == "grid") ++grids;
        if (m.event == "node") {
          auto j = json::parse(m.data);
          if (j["node_id"] == "n3" && j["latest_spl_db"] == 81.0) saw_node = true;
        }
        return !(saw_node && grids >= 2);
      });
    });
    std::this_thread::sleep_for(100ms);
    db.put(rtdb::Path::parse("/nodes/n3/latest"), reading(spec, 20, 20, 81.0, kNow, 1), "tok");
    CHECK(eventually([&] { return saw_node.load() && grids >= 2; }));
    stream.stop();
  }

  svc.stop();
}

TEST_CASE("mapper follows a remote database over SSE and resyncs after a restart") {
  std::atomic<std::int64_t> now{kNow};
  rtdb::Database db(memory_db());
  auto server = std::make_unique<rtdb::RtdbServer>(db, rtdb::ServerOptions{});
  const int db_port = server->start();

  auto cfg = test_config(now);
  const GridSpec spec = cfg.grid;
  MapperService svc(cfg, remote_link(net::Endpoint{"127.0.0.1", db_port}, "tok"));
  const int port = svc.start();
  net::HttpClient http(net::Endpoint{"127.0.0.1", port});

  REQUIRE(eventually([&] { return svc.feed_connected(); }));
  db.put(rtdb::Path::parse("/nodes/a/latest"), reading(spec, 1, 1, 55.0, kNow, 1), "tok");
  REQUIRE(eventually([&] { return get_json(http, "/api/nodes").size() == 1; }));

  // Restart the database server on the same port; writes made while it is
  // down arrive through the fresh snapshot.
  server->stop();
  server.reset();
  REQUIRE(eventually([&] { return !svc.feed_connected(); }));
  db.put(rtdb::Path::parse("/nodes/b/latest"), reading(spec, 2, 2, 65.0, kNow, 1), "tok");
  rtdb::ServerOptions again;
  again.port = db_port;
  server = std::make_unique<rtdb::RtdbServer>(db, again);
  server->start();
  CHECK(eventually([&] { return get_json(http, "/api/nodes").size() == 2; }, 5000ms));
  CHECK(get_json(http, "/healthz")["feed"] == "connected");
  svc.stop();
}

TEST_CASE("mapper config validation") {
  std::atomic<std::int64_t> now{kNow};
  rtdb::Database db(memory_db());
  auto cfg = test_config(now);
  cfg.grid.rows = 0;
  CHECK_THROWS(MapperService(cfg, local_link(db, "tok")));
  cfg = test_config(now);
  cfg.stops = {{60, {}}, {50, {}}};
  CHECK_THROWS(MapperService(cfg, local_link(db, "tok")));
  cfg = test_config(now);
  cfg.static_dir = "/definitely/not/here";
  CHECK_THROWS(MapperService(cfg, local_link(db, "tok")));
}

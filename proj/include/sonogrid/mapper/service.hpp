#pragma once

#include "sonogrid/mapper/color.hpp"
#include "sonogrid/mapper/grid.hpp"
#include "sonogrid/mapper/link.hpp"
#include "sonogrid/mapper/registry.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sonogrid::mapper {

struct MapperConfig {
  GridSpec grid;
  std::vector<ColorStop> stops = default_stops();
  std::int64_t stale_after_ms = 10'000;
  IdwParams idw;
  /// Upper bound between grid refreshes; a staleness change is noticed within this.
  std::chrono::milliseconds recompute_interval{1000};
  /// Lower bound between refreshes triggered by incoming readings.
  std::chrono::milliseconds min_recompute_gap{100};
  std::chrono::milliseconds keepalive{15'000};
  std::size_t stream_buffer = 4096;  // frames per /api/stream client
  std::size_t log_limit_default = 100;
  std::size_t log_limit_max = 5000;
  std::string host = "127.0.0.1";
  int port = 0;
  std::optional<std::filesystem::path> static_dir;
  std::function<std::int64_t()> now_ms;  // defaults to the system clock
};

void validate(const MapperConfig& cfg);

/// Consumes /nodes change events, keeps per-node state, recomputes the
/// heat grid and serves the /api endpoints.
///
///   GET /api/nodes              array of node states
///   GET /api/grid               latest heat grid
///   GET /api/stream             text/event-stream of `node`, `remove` and `grid` events
///   GET /api/config             grid spec, colour stops and interpolation settings
///   GET /api/nodes/{id}/log     recent log entries, `?limit=N`
///   GET /healthz                liveness
class MapperService {
 public:
  MapperService(MapperConfig cfg, std::unique_ptr<RtdbLink> link);
  ~MapperService();
  MapperService(const MapperService&) = delete;
  MapperService& operator=(const MapperService&) = delete;

  /// Starts the consumer, the recompute loop and the HTTP listener; returns the bound port.
  int start();
  void stop();
  int port() const;

  std::vector<NodeState> nodes() const;
  std::shared_ptr<const HeatGrid> grid() const;
  std::uint64_t rejects() const;
  std::uint64_t events_ingested() const;
  bool feed_connected() const;
  nlohmann::json config_json() const;

  /// Forces a recompute with the current state and publishes it.
  void recompute_now();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sonogrid::mapper

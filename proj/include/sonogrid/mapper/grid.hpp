#pragma once

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sonogrid::mapper {

using json = nlohmann::json;

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr int kMaxGridSide = 512;

double haversine_m(double lat1, double lon1, double lat2, double lon2);

struct BBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;
};

/// Row 0 is the northern edge; values are sampled at cell centres.
struct GridSpec {
  BBox bbox;
  int rows = 128;
  int cols = 128;

  std::pair<double, double> cell_center(int row, int col) const;
  /// Cell containing (lat, lon), or nullopt outside the bbox.
  std::optional<std::pair<int, int>> cell_of(double lat, double lon) const;
  json to_json() const;
};

void validate(const GridSpec& spec);

struct NodeState {
  std::string node_id;
  double lat = 0.0;
  double lon = 0.0;
  double latest_spl_db = 0.0;
  std::int64_t last_seen = 0;
  std::uint64_t seq = 0;
  bool stale = false;

  json to_json() const;
  bool operator==(const NodeState&) const = default;
};

struct HeatGrid {
  GridSpec spec;
  std::vector<std::optional<double>> values;  // row-major
  std::int64_t generated_at = 0;
  std::size_t live_nodes = 0;

  const std::optional<double>& at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * static_cast<std::size_t>(spec.cols) + static_cast<std::size_t>(col)];
  }
  json to_json() const;
};

struct IdwParams {
  double power = 2.0;
  double r_max_m = 2000.0;
  double exact_m = 1.0;
};

void validate(const IdwParams& params);

/// Inverse-distance weighting at every cell centre. A cell within
/// `exact_m` of a node takes that node's value (the nearest one if several);
/// otherwise nodes within r_max contribute with weight 1/d^p, and a cell
/// with no node in range stays empty. Callers pass live nodes only.
HeatGrid idw_interpolate(std::span<const NodeState> nodes, const GridSpec& spec, const IdwParams& params,
                         std::int64_t generated_at);

/// Single-point form of the same rule.
std::optional<double> idw_at(std::span<const NodeState> nodes, double lat, double lon, const IdwParams& params);

}  // namespace sonogrid::mapper

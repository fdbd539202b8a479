#include "sonogrid/mapper/grid.hpp"

#include "sonogrid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sonogrid::mapper {

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double a = s1 * s1 + std::cos(lat1 * rad) * std::cos(lat2 * rad) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

void validate(const GridSpec& spec) {
  const auto& b = spec.bbox;
  if (!(b.lat_min < b.lat_max) || !(b.lon_min < b.lon_max)) throw ValidationError("bbox must have min < max");
  if (b.lat_min < -90.0 || b.lat_max > 90.0 || b.lon_min < -180.0 || b.lon_max > 180.0) {
    throw ValidationError("bbox outside valid coordinates");
  }
  if (spec.rows < 1 || spec.cols < 1 || spec.rows > kMaxGridSide || spec.cols > kMaxGridSide) {
    throw ValidationError("grid rows and cols must be within [1, 512]");
  }
}

std::pair<double, double> GridSpec::cell_center(int row, int col) const {
  const double dlat = (bbox.lat_max - bbox.lat_min) / rows;
  const double dlon = (bbox.lon_max - bbox.lon_min) / cols;
  return {bbox.lat_max - (row + 0.5) * dlat, bbox.lon_min + (col + 0.5) * dlon};
}

std::optional<std::pair<int, int>> GridSpec::cell_of(double lat, double lon) const {
  if (lat < bbox.lat_min || lat > bbox.lat_max || lon < bbox.lon_min || lon > bbox.lon_max) return std::nullopt;
  const double dlat = (bbox.lat_max - bbox.lat_min) / rows;
  const double dlon = (bbox.lon_max - bbox.lon_min) / cols;
  const int row = std::min(rows - 1, static_cast<int>(std::floor((bbox.lat_max - lat) / dlat)));
  const int col = std::min(cols - 1, static_cast<int>(std::floor((lon - bbox.lon_min) / dlon)));
  return std::pair{row, col};
}

json GridSpec::to_json() const {
  return json{{"bbox",
               {{"lat_min", bbox.lat_min}, {"lat_max", bbox.lat_max}, {"lon_min", bbox.lon_min}, {"lon_max", bbox.lon_max}}},
              {"rows", rows},
              {"cols", cols}};
}

json NodeState::to_json() const {
  return json{{"node_id", node_id}, {"lat", lat},   {"lon", lon},     {"latest_spl_db", latest_spl_db},
              {"last_seen", last_seen}, {"seq", seq}, {"stale", stale}};
}

json HeatGrid::to_json() const {
  json vals = json::array();
  auto& arr = vals.get_ref<json::array_t&>();
  arr.reserve(values.size());
  for (const auto& v : values) arr.emplace_back(v ? json(*v) : json(nullptr));
  return json{{"spec", spec.to_json()}, {"values", std::move(vals)}, {"generated_at", generated_at}, {"live_nodes", live_nodes}};
}

void validate(const IdwParams& params) {
  if (!(params.power > 0.0)) throw ValidationError("IDW power must be positive");
  if (!(params.r_max_m > 0.0)) throw ValidationError("IDW radius must be positive");
  if (!(params.exact_m >= 0.0)) throw ValidationError("IDW exactness radius must be non-negative");
}

std::optional<double> idw_at(std::span<const NodeState> nodes, double lat, double lon, const IdwParams& params) {
  thread_local std::vector<std::pair<double, double>> contrib;  // (weight, value)
  contrib.clear();
  double total = 0.0;
  double nearest = std::numeric_limits<double>::infinity();
  std::optional<double> exact;
  for (const auto& n : nodes) {
    const double d = haversine_m(lat, lon, n.lat, n.lon);
    if (d <= params.exact_m) {
      if (d < nearest) {
        nearest = d;
        exact = n.latest_spl_db;
      }
      continue;
    }
    if (d > params.r_max_m) continue;
    const double w = 1.0 / std::pow(d, params.power);
    contrib.emplace_back(w, n.latest_spl_db);
    total += w;
  }
  if (exact) return exact;
  if (contrib.empty()) return std::nullopt;

  // Normalized weights keep symmetric cases exact; the clamp absorbs rounding at the edges.
  double value = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [w, v] : contrib) {
    value += (w / total) * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return std::clamp(value, lo, hi);
}

HeatGrid idw_interpolate(std::span<const NodeState> nodes, const GridSpec& spec, const IdwParams& params,
                         std::int64_t generated_at) {
  validate(spec);
  validate(params);
  HeatGrid grid{spec, {}, generated_at, nodes.size()};
  grid.values.resize(static_cast<std::size_t>(spec.rows) * static_cast<std::size_t>(spec.cols));
  if (nodes.empty()) return grid;
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      const auto [lat, lon] = spec.cell_center(r, c);
      grid.values[static_cast<std::size_t>(r) * spec.cols + c] = idw_at(nodes, lat, lon, params);
    }
  }
  return grid;
}

}  // namespace sonogrid::mapper

#include "sonogrid/mapper/color.hpp"

#include "sonogrid/errors.hpp"

#include <algorithm>
#include <cmath>

namespace sonogrid::mapper {

std::vector<ColorStop> default_stops() {
  return {{40.0, {0, 200, 0, 180}}, {65.0, {220, 200, 0, 180}}, {90.0, {220, 0, 0, 180}}};
}

void validate(std::span<const ColorStop> stops) {
  if (stops.empty()) throw ValidationError("at least one color stop is required");
  for (std::size_t i = 0; i < stops.size(); ++i) {
    if (!std::isfinite(stops[i].db)) throw ValidationError("color stop db must be finite");
    if (i > 0 && !(stops[i].db > stops[i - 1].db)) throw ValidationError("color stops must be strictly increasing");
  }
}

Rgba color_map(double db, std::span<const ColorStop> stops) {
  if (std::isnan(db) || db <= stops.front().db) return stops.front().rgba;
  if (db >= stops.back().db) return stops.back().rgba;
  const auto hi = std::upper_bound(stops.begin(), stops.end(), db,
                                   [](double v, const ColorStop& s) { return v < s.db; });
  const auto lo = hi - 1;
  const double t = (db - lo->db) / (hi->db - lo->db);
  Rgba out{};
  for (std::size_t ch = 0; ch < 4; ++ch) {
    const double a = lo->rgba[ch];
    const double b = hi->rgba[ch];
    out[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(a + (b - a) * t), 0L, 255L));
  }
  return out;
}

nlohmann::json to_json(std::span<const ColorStop> stops) {
  auto arr = nlohmann::json::array();
  for (const auto& s : stops) arr.push_back({{"db", s.db}, {"rgba", s.rgba}});
  return arr;
}

std::vector<ColorStop> stops_from_json(const nlohmann::json& j) {
  std::vector<ColorStop> out;
  for (const auto& item : j) {
    ColorStop s;
    s.db = item.at("db").get<double>();
    const auto& c = item.at("rgba");
    if (!c.is_array() || c.size() != 4) throw ValidationError("rgba needs four channels");
    for (std::size_t ch = 0; ch < 4; ++ch) {
      const int v = c[ch].get<int>();
      if (v < 0 || v > 255) throw ValidationError("rgba channels must be within [0, 255]");
      s.rgba[ch] = static_cast<std::uint8_t>(v);
    }
    out.push_back(s);
  }
  validate(out);
  return out;
}

}  // namespace sonogrid::mapper

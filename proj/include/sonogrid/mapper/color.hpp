#pragma once

#include "json.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace sonogrid::mapper {

using Rgba = std::array<std::uint8_t, 4>;

struct ColorStop {
  double db = 0.0;
  Rgba rgba{};
  bool operator==(const ColorStop&) const = default;
};

/// green at 40 dB, yellow at 65 dB, red at 90 dB; alpha 180 throughout.
std::vector<ColorStop> default_stops();

/// Non-empty, finite and strictly increasing in db.
void validate(std::span<const ColorStop> stops);

/// Per-channel linear interpolation between the bracketing stops, rounded
/// to the nearest integer; values outside the range take the end stops.
Rgba color_map(double db, std::span<const ColorStop> stops);

nlohmann::json to_json(std::span<const ColorStop> stops);
std::vector<ColorStop> stops_from_json(const nlohmann::json& j);

}  // namespace sonogrid::mapper

#pragma once

#include "sonogrid/mapper/service.hpp"
#include "sonogrid/node/agent.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sonogrid::app {

struct RtdbSection {
  std::string bind = "127.0.0.1:8080";
  std::string token;
  std::optional<std::filesystem::path> journal;
  bool sync_writes = true;
};

struct MapperSection {
  std::string bind = "127.0.0.1:8081";
  std::optional<mapper::BBox> bbox;
  int rows = 128;
  int cols = 128;
  std::vector<mapper::ColorStop> stops = mapper::default_stops();
  std::int64_t stale_after_ms = 10'000;
  mapper::IdwParams idw;
  std::int64_t recompute_interval_ms = 1000;
  std::optional<std::filesystem::path> static_dir;
};

/// A YAML document with `rtdb`, `mapper`, `nodes` and `duration_s` keys;
/// see scenarios/demo.yaml for the annotated layout.
struct ScenarioFile {
  RtdbSection rtdb;
  MapperSection mapper;
  std::vector<node::NodeConfig> nodes;
  std::optional<double> duration_s;
};

using EnvLookup = std::function<std::optional<std::string>(const char*)>;
EnvLookup process_env();

/// Parses and validates a scenario. Relative paths resolve against
/// `base_dir`. SONOGRID_TOKEN replaces rtdb.token and SONOGRID_BIND replaces
/// rtdb.bind before nodes inherit their server and token from that section.
/// Throws ValidationError naming the offending key.
ScenarioFile parse_scenario(std::string_view yaml, const std::filesystem::path& base_dir,
                            const EnvLookup& env = process_env());
ScenarioFile load_scenario(const std::filesystem::path& file, const EnvLookup& env = process_env());

/// Scenario used when no file is given: defaults plus environment overrides.
ScenarioFile default_scenario(const EnvLookup& env = process_env());

void validate(const ScenarioFile& scenario);

mapper::MapperConfig mapper_config(const ScenarioFile& scenario);

}  // namespace sonogrid::app

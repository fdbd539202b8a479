#include "sonogrid/app/scenario.hpp"

#include "sonogrid/errors.hpp"
#include "sonogrid/net/http.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace sonogrid::app {

namespace fs = std::filesystem;

namespace {

std::string where(const YAML::Node& node, const std::string& key) {
  const auto mark = node.Mark();
  if (mark.line < 0) return key;
  return key + " (line " + std::to_string(mark.line + 1) + ")";
}

void require_map(const YAML::Node& node, const std::string& key) {
  if (!node.IsMap()) throw ValidationError(where(node, key) + ": expected a mapping");
}

void allow_keys(const YAML::Node& node, const std::string& key, std::initializer_list<std::string_view> keys) {
  require_map(node, key);
  for (const auto& kv : node) {
    const auto name = kv.first.as<std::string>();
    bool known = false;
    for (auto k : keys) known = known || k == name;
    if (!known) throw ValidationError(where(kv.first, key + "." + name) + ": unknown key");
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(where(node, key) + ": invalid value '" + (node.IsScalar() ? node.Scalar() : "") + "'");
  }
}

template <typename T>
void read_opt(const YAML::Node& parent, const char* name, const std::string& key, T& out) {
  if (const auto n = parent[name]) out = scalar<T>(n, key + "." + name);
}

fs::path resolve(const fs::path& base, const std::string& text) {
  fs::path p(text);
  return p.is_relative() ? base / p : p;
}

mapper::BBox parse_bbox(const YAML::Node& n, const std::string& key) {
  allow_keys(n, key, {"lat_min", "lat_max", "lon_min", "lon_max"});
  mapper::BBox b;
  for (const char* k : {"lat_min", "lat_max", "lon_min", "lon_max"}) {
    if (!n[k]) throw ValidationError(key + "." + k + " is required");
  }
  b.lat_min = scalar<double>(n["lat_min"], key + ".lat_min");
  b.lat_max = scalar<double>(n["lat_max"], key + ".lat_max");
  b.lon_min = scalar<double>(n["lon_min"], key + ".lon_min");
  b.lon_max = scalar<double>(n["lon_max"], key + ".lon_max");
  return b;
}

std::vector<mapper::ColorStop> parse_stops(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) throw ValidationError(where(n, key) + ": expected a list");
  std::vector<mapper::ColorStop> stops;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string k = key + "[" + std::to_string(i) + "]";
    allow_keys(n[i], k, {"db", "rgba"});
    mapper::ColorStop s;
    s.db = scalar<double>(n[i]["db"], k + ".db");
    const auto rgba = n[i]["rgba"];
    if (!rgba.IsSequence() || rgba.size() != 4) throw ValidationError(where(n[i], k) + ".rgba: expected 4 channels");
    for (std::size_t c = 0; c < 4; ++c) {
      const int v = scalar<int>(rgba[c], k + ".rgba");
      if (v < 0 || v > 255) throw ValidationError(where(rgba[c], k + ".rgba") + ": channel outside 0..255");
      s.rgba[c] = static_cast<std::uint8_t>(v);
    }
    stops.push_back(s);
  }
  return stops;
}

void parse_rtdb(const YAML::Node& n, const fs::path& base, RtdbSection& out) {
  allow_keys(n, "rtdb", {"bind", "token", "journal", "sync_writes"});
  read_opt(n, "bind", "rtdb", out.bind);
  read_opt(n, "token", "rtdb", out.token);
  read_opt(n, "sync_writes", "rtdb", out.sync_writes);
  if (const auto j = n["journal"]) out.journal = resolve(base, scalar<std::string>(j, "rtdb.journal"));
}

void parse_mapper(const YAML::Node& n, const fs::path& base, MapperSection& out) {
  allow_keys(n, "mapper",
             {"bind", "bbox", "grid", "stops", "stale_after_ms", "idw", "recompute_interval_ms", "static_dir"});
  read_opt(n, "bind", "mapper", out.bind);
  if (const auto b = n["bbox"]) out.bbox = parse_bbox(b, "mapper.bbox");
  if (const auto g = n["grid"]) {
    allow_keys(g, "mapper.grid", {"rows", "cols"});
    read_opt(g, "rows", "mapper.grid", out.rows);
    read_opt(g, "cols", "mapper.grid", out.cols);
  }
  if (const auto s = n["stops"]) out.stops = parse_stops(s, "mapper.stops");
  read_opt(n, "stale_after_ms", "mapper", out.stale_after_ms);
  read_opt(n, "recompute_interval_ms", "mapper", out.recompute_interval_ms);
  if (const auto i = n["idw"]) {
    allow_keys(i, "mapper.idw", {"power", "r_max_m", "exact_m"});
    read_opt(i, "power", "mapper.idw", out.idw.power);
    read_opt(i, "r_max_m", "mapper.idw", out.idw.r_max_m);
    read_opt(i, "exact_m", "mapper.idw", out.idw.exact_m);
  }
  if (const auto d = n["static_dir"]) out.static_dir = resolve(base, scalar<std::string>(d, "mapper.static_dir"));
}

node::SignalSourceSpec parse_source(const YAML::Node& n, const fs::path& base, const std::string& key) {
  allow_keys(n, key, {"kind", "amplitude", "frequency_hz", "seed", "noise_amplitude", "file"});
  node::SignalSourceSpec s;
  if (!n["kind"]) throw ValidationError(key + ".kind is required");
  try {
    s.kind = node::parse_source_kind(scalar<std::string>(n["kind"], key + ".kind"));
  } catch (const ValidationError& e) {
    throw ValidationError(where(n["kind"], key + ".kind") + ": " + e.what());
  }
  read_opt(n, "amplitude", key, s.amplitude_counts);
  read_opt(n, "frequency_hz", key, s.frequency_hz);
  read_opt(n, "seed", key, s.seed);
  read_opt(n, "noise_amplitude", key, s.noise_amplitude_counts);
  if (const auto f = n["file"]) s.path = resolve(base, scalar<std::string>(f, key + ".file")).string();
  return s;
}

node::NodeConfig parse_node(const YAML::Node& n, const fs::path& base, const std::string& key) {
  allow_keys(n, key,
             {"id", "lat", "lon", "interval_ms", "calibration", "weighting", "sample_rate_hz", "block_size", "source",
              "server", "token"});
  node::NodeConfig cfg;
  for (const char* k : {"id", "lat", "lon", "source"}) {
    if (!n[k]) throw ValidationError(where(n, key) + ": " + k + " is required");
  }
  cfg.node_id = scalar<std::string>(n["id"], key + ".id");
  cfg.lat = scalar<double>(n["lat"], key + ".lat");
  cfg.lon = scalar<double>(n["lon"], key + ".lon");
  read_opt(n, "interval_ms", key, cfg.publish_interval_ms);
  read_opt(n, "sample_rate_hz", key, cfg.sample_rate_hz);
  read_opt(n, "block_size", key, cfg.block_size);
  read_opt(n, "server", key, cfg.server_url);
  read_opt(n, "token", key, cfg.auth_token);
  if (const auto c = n["calibration"]) {
    allow_keys(c, key + ".calibration", {"offset_db", "floor_db", "ceiling_db"});
    read_opt(c, "offset_db", key + ".calibration", cfg.calibration.offset_db);
    read_opt(c, "floor_db", key + ".calibration", cfg.calibration.floor_db);
    read_opt(c, "ceiling_db", key + ".calibration", cfg.calibration.ceiling_db);
  }
  if (const auto w = n["weighting"]) {
    const auto text = scalar<std::string>(w, key + ".weighting");
    if (text == "A" || text == "a") {
      cfg.weighting = dsp::Weighting::kA;
    } else if (text == "none") {
      cfg.weighting = dsp::Weighting::kNone;
    } else {
      throw ValidationError(where(w, key + ".weighting") + ": expected 'A' or 'none'");
    }
  }
  cfg.source = parse_source(n["source"], base, key + ".source");
  return cfg;
}

void apply_env(ScenarioFile& s, const EnvLookup& env) {
  if (auto t = env("SONOGRID_TOKEN")) s.rtdb.token = *t;
  if (auto b = env("SONOGRID_BIND")) s.rtdb.bind = *b;
}

void inherit_defaults(ScenarioFile& s) {
  for (auto& n : s.nodes) {
    if (n.server_url.empty()) n.server_url = s.rtdb.bind;
    if (n.auth_token.empty()) n.auth_token = s.rtdb.token;
  }
}

}  // namespace

EnvLookup process_env() {
  return [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
}

ScenarioFile parse_scenario(std::string_view yaml, const fs::path& base_dir, const EnvLookup& env) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("scenario is not valid YAML: ") + e.what());
  }
  ScenarioFile s;
  if (!root.IsNull()) {
    allow_keys(root, "scenario", {"rtdb", "mapper", "nodes", "duration_s"});
    if (const auto r = root["rtdb"]) parse_rtdb(r, base_dir, s.rtdb);
    if (const auto m = root["mapper"]) parse_mapper(m, base_dir, s.mapper);
    if (const auto d = root["duration_s"]) s.duration_s = scalar<double>(d, "duration_s");
    if (const auto nodes = root["nodes"]) {
      if (!nodes.IsSequence()) throw ValidationError(where(nodes, "nodes") + ": expected a list");
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        s.nodes.push_back(parse_node(nodes[i], base_dir, "nodes[" + std::to_string(i) + "]"));
      }
    }
  }
  apply_env(s, env);
  inherit_defaults(s);
  validate(s);
  return s;
}

ScenarioFile load_scenario(const fs::path& file, const EnvLookup& env) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot read scenario file " + file.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), file.parent_path(), env);
}

ScenarioFile default_scenario(const EnvLookup& env) { return parse_scenario("", fs::current_path(), env); }

void validate(const ScenarioFile& s) {
  net::Endpoint::parse(s.rtdb.bind);
  net::Endpoint::parse(s.mapper.bind);
  if (s.rtdb.journal) {
    const auto dir = s.rtdb.journal->parent_path();
    if (!dir.empty() && !fs::is_directory(dir)) {
      throw ValidationError("rtdb.journal directory does not exist: " + dir.string());
    }
  }
  if (s.duration_s && !(*s.duration_s > 0.0)) throw ValidationError("duration_s must be positive");
  if (s.mapper.bbox) mapper::validate(mapper::GridSpec{*s.mapper.bbox, s.mapper.rows, s.mapper.cols});
  mapper::validate(s.mapper.stops);
  mapper::validate(s.mapper.idw);
  if (s.mapper.stale_after_ms <= 0) throw ValidationError("mapper.stale_after_ms must be positive");
  if (s.mapper.recompute_interval_ms <= 0) throw ValidationError("mapper.recompute_interval_ms must be positive");
  if (s.mapper.static_dir && !fs::is_directory(*s.mapper.static_dir)) {
    throw ValidationError("mapper.static_dir does not exist: " + s.mapper.static_dir->string());
  }
  std::set<std::string> ids;
  for (const auto& n : s.nodes) {
    node::validate(n);
    if (!ids.insert(n.node_id).second) throw ValidationError("duplicate node id '" + n.node_id + "'");
    net::Endpoint::parse(n.server_url);
    if (n.source.kind == node::SourceKind::kFile && !fs::is_regular_file(n.source.path)) {
      throw ValidationError("source file for node '" + n.node_id + "' does not exist: " + n.source.path);
    }
  }
}

mapper::MapperConfig mapper_config(const ScenarioFile& s) {
  if (!s.mapper.bbox) throw ValidationError("mapper.bbox is required to run the mapper");
  mapper::MapperConfig cfg;
  cfg.grid = mapper::GridSpec{*s.mapper.bbox, s.mapper.rows, s.mapper.cols};
  cfg.stops = s.mapper.stops;
  cfg.stale_after_ms = s.mapper.stale_after_ms;
  cfg.idw = s.mapper.idw;
  cfg.recompute_interval = std::chrono::milliseconds(s.mapper.recompute_interval_ms);
  cfg.static_dir = s.mapper.static_dir;
  const auto ep = net::Endpoint::parse(s.mapper.bind);
  cfg.host = ep.host;
  cfg.port = ep.port;
  return cfg;
}

}  // namespace sonogrid::app

#include "sonogrid/mapper/registry.hpp"

#include "sonogrid/rtdb/tree.hpp"

#include <cmath>
#include <set>

namespace sonogrid::mapper {

std::optional<NodeState> parse_latest(const std::string& node_id, const json& latest) {
  if (!latest.is_object()) return std::nullopt;
  auto number = [&](const char* key) -> std::optional<double> {
    auto it = latest.find(key);
    if (it == latest.end() || !it->is_number()) return std::nullopt;
    const double v = it->get<double>();
    return std::isfinite(v) ? std::optional(v) : std::nullopt;
  };
  const auto spl = number("spl_db");
  const auto lat = number("lat");
  const auto lon = number("lon");
  auto ts = latest.find("ts");
  if (!spl || !lat || !lon || ts == latest.end() || !ts->is_number_integer()) return std::nullopt;
  if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) return std::nullopt;

  NodeState s;
  s.node_id = node_id;
  s.lat = *lat;
  s.lon = *lon;
  s.latest_spl_db = *spl;
  s.last_seen = ts->get<std::int64_t>();
  if (auto seq = latest.find("seq"); seq != latest.end()) {
    if (!seq->is_number_unsigned()) return std::nullopt;
    s.seq = seq->get<std::uint64_t>();
  }
  return s;
}

void NodeRegistry::put_node(const std::string& id, const json& node, std::vector<std::string>& touched) {
  touched.push_back(id);
  if (node.is_object() && node.contains("latest")) {
    latest_[id] = node["latest"];
  } else {
    latest_.erase(id);
  }
}

std::vector<NodeRegistry::Change> NodeRegistry::ingest(const rtdb::Event& event) {
  const auto& segs = event.path.segments();
  std::vector<std::string> touched;
  const bool put = event.kind == rtdb::Verb::kPut;

  if (segs.empty()) {
    if (put) {
      for (const auto& [id, _] : latest_.items()) touched.push_back(id);
      latest_ = json::object();
    }
    if (event.data.is_object()) {
      for (const auto& [id, node] : event.data.items()) put_node(id, node, touched);
    }
  } else if (segs.size() == 1) {
    const std::string& id = segs[0];
    if (put) {
      put_node(id, event.data, touched);
    } else if (event.data.is_object() && event.data.contains("latest")) {
      touched.push_back(id);
      const json& v = event.data["latest"];
      if (v.is_null()) {
        latest_.erase(id);
      } else {
        latest_[id] = v;
      }
    }
  } else if (segs[1] == "latest") {
    const std::string& id = segs[0];
    touched.push_back(id);
    json node = latest_.contains(id) ? latest_[id] : json(nullptr);
    const auto rel = rtdb::Path::from_segments(std::vector<std::string>(segs.begin() + 2, segs.end()));
    if (put) {
      rtdb::set_at(node, rel, event.data);
    } else {
      rtdb::merge_at(node, rel, event.data);
    }
    if (node.is_null()) {
      latest_.erase(id);
    } else {
      latest_[id] = std::move(node);
    }
  }

  std::vector<Change> changes;
  std::set<std::string> seen;
  for (const auto& id : touched) {
    if (seen.insert(id).second) refresh(id, changes);
  }
  return changes;
}

void NodeRegistry::refresh(const std::string& id, std::vector<Change>& changes) {
  auto it = latest_.find(id);
  if (it == latest_.end()) {
    if (states_.erase(id) > 0) changes.push_back({id, std::nullopt});
    return;
  }
  auto parsed = parse_latest(id, *it);
  if (!parsed) {
    ++rejects_;
    return;
  }
  auto& slot = states_[id];
  if (slot != *parsed) {
    slot = *parsed;
    changes.push_back({id, slot});
  }
}

void NodeRegistry::reset(const json& nodes) {
  ingest(rtdb::Event{0, rtdb::Verb::kPut, rtdb::Path{}, nodes});
}

std::vector<NodeState> NodeRegistry::snapshot(std::int64_t now_ms, std::int64_t stale_after_ms) const {
  std::vector<NodeState> out;
  out.reserve(states_.size());
  for (const auto& [_, s] : states_) {
    out.push_back(s);
    out.back().stale = is_stale(s, now_ms, stale_after_ms);
  }
  return out;
}

std::optional<NodeState> NodeRegistry::find(const std::string& node_id) const {
  auto it = states_.find(node_id);
  if (it == states_.end()) return std::nullopt;
  return it->second;
}

}  // namespace sonogrid::mapper

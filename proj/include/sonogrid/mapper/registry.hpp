#pragma once

#include "sonogrid/mapper/grid.hpp"
#include "sonogrid/rtdb/database.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sonogrid::mapper {

/// Parses a /nodes/{id}/latest object; nullopt when a required field is
/// missing or out of range.
std::optional<NodeState> parse_latest(const std::string& node_id, const json& latest);

/// Latest-per-node state folded from change events of a subscription
/// rooted at /nodes. Log subtrees are ignored.
class NodeRegistry {
 public:
  struct Change {
    std::string node_id;
    std::optional<NodeState> state;  // nullopt: node removed
  };

  /// Applies one event; returns the nodes whose state changed.
  std::vector<Change> ingest(const rtdb::Event& event);

  /// Rebuilds from a full /nodes value.
  void reset(const json& nodes);

  /// States with the stale flag evaluated at `now_ms`, sorted by node id.
  std::vector<NodeState> snapshot(std::int64_t now_ms, std::int64_t stale_after_ms) const;
  std::optional<NodeState> find(const std::string& node_id) const;

  std::uint64_t rejects() const { return rejects_; }
  std::size_t size() const { return states_.size(); }

 private:
  void put_node(const std::string& id, const json& node, std::vector<std::string>& touched);
  void refresh(const std::string& id, std::vector<Change>& changes);

  json latest_ = json::object();  // id -> mirrored latest object
  std::map<std::string, NodeState> states_;
  std::uint64_t rejects_ = 0;
};

inline bool is_stale(const NodeState& s, std::int64_t now_ms, std::int64_t stale_after_ms) {
  return now_ms - s.last_seen > stale_after_ms;
}

}  // namespace sonogrid::mapper

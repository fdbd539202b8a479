#include "sonogrid/rtdb/tree.hpp"

#include "sonogrid/errors.hpp"

#include <string>

namespace sonogrid::rtdb {

namespace {

bool is_absent(const json& v) { return v.is_null() || (v.is_object() && v.empty()); }

void set_recursive(json& node, const std::vector<std::string>& segs, std::size_t idx,
                   const json& value) {
  if (idx == segs.size()) {
    node = value;
    return;
  }
  if (!node.is_object()) {
    if (value.is_null()) return;
    node = json::object();
  }
  json& child = node[segs[idx]];
  set_recursive(child, segs, idx + 1, value);
  if (is_absent(child)) node.erase(segs[idx]);
  if (node.empty()) node = nullptr;
}

}  // namespace

json normalize(const json& value) {
  switch (value.type()) {
    case json::value_t::null:
    case json::value_t::boolean:
    case json::value_t::string:
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
    case json::value_t::number_float:
      return value;
    case json::value_t::object: {
      json out = json::object();
      for (const auto& [key, child] : value.items()) {
        if (!is_valid_segment(key)) throw ValidationError("invalid key '" + key + "'");
        json normalized = normalize(child);
        if (!normalized.is_null()) out[key] = std::move(normalized);
      }
      return out.empty() ? json(nullptr) : out;
    }
    case json::value_t::array: {
      json out = json::object();
      for (std::size_t i = 0; i < value.size(); ++i) {
        json normalized = normalize(value[i]);
        if (!normalized.is_null()) out[std::to_string(i)] = std::move(normalized);
      }
      return out.empty() ? json(nullptr) : out;
    }
    default:
      throw ValidationError("unsupported JSON value");
  }
}

json normalize_patch(const json& fields) {
  if (!fields.is_object()) throw ValidationError("patch body must be a JSON object");
  json out = json::object();
  for (const auto& [key, child] : fields.items()) {
    if (!is_valid_segment(key)) throw ValidationError("invalid key '" + key + "'");
    out[key] = normalize(child);
  }
  return out;
}

json get_at(const json& tree, const Path& path) {
  const json* node = &tree;
  for (const auto& seg : path.segments()) {
    if (!node->is_object()) return nullptr;
    auto it = node->find(seg);
    if (it == node->end()) return nullptr;
    node = &*it;
  }
  return *node;
}

void set_at(json& tree, const Path& path, const json& value) {
  set_recursive(tree, path.segments(), 0, value);
}

void merge_at(json& tree, const Path& path, const json& fields) {
  for (const auto& [key, child] : fields.items()) set_at(tree, path.child(key), child);
}

}  // namespace sonogrid::rtdb

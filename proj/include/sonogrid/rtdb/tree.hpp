#pragma once

// Value-level semantics of the JSON tree: null means absent, empty objects
// are never stored, and arrays are stored as objects keyed by index.

#include "sonogrid/rtdb/path.hpp"

#include "json.hpp"

namespace sonogrid::rtdb {

using json = nlohmann::json;

/// Canonical stored form of a client value: nulls and empty objects pruned,
/// arrays turned into index-keyed objects. Throws ValidationError on keys
/// outside the path charset.
json normalize(const json& value);

/// Normalizes a patch body. Keys may map to null (delete that child).
json normalize_patch(const json& fields);

/// Subtree at `path`, or null.
json get_at(const json& tree, const Path& path);

/// Replaces the subtree at `path` (null deletes) and prunes empty ancestors.
/// `value` must already be normalized.
void set_at(json& tree, const Path& path, const json& value);

/// Shallow merge of normalized patch `fields` into the object at `path`.
void merge_at(json& tree, const Path& path, const json& fields);

}  // namespace sonogrid::rtdb

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sonogrid::rtdb {

inline constexpr std::size_t kMaxPathDepth = 32;

bool is_valid_segment(std::string_view segment);

/// Location in the JSON tree. Canonical text form is "/a/b/c"; root is "/".
class Path {
 public:
  Path() = default;

  /// Accepts "/", "", "/a/b" and "a/b"; a single trailing slash is tolerated.
  static Path parse(std::string_view text);
  static Path from_segments(std::vector<std::string> segments);

  const std::vector<std::string>& segments() const { return segments_; }
  std::size_t depth() const { return segments_.size(); }
  bool is_root() const { return segments_.empty(); }

  std::string str() const;

  Path child(std::string_view segment) const;
  Path parent() const;

  /// True when this path is `other` or one of its ancestors.
  bool is_ancestor_or_self_of(const Path& other) const;

  /// `other` expressed relative to this path. Requires is_ancestor_or_self_of(other).
  Path relativize(const Path& other) const;

  friend bool operator==(const Path&, const Path&) = default;
  friend auto operator<=>(const Path&, const Path&) = default;

 private:
  explicit Path(std::vector<std::string> segments) : segments_(std::move(segments)) {}
  std::vector<std::string> segments_;
};

}  // namespace sonogrid::rtdb

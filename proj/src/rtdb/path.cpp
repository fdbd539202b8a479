#include "sonogrid/rtdb/path.hpp"

#include "sonogrid/errors.hpp"

#include <algorithm>

namespace sonogrid::rtdb {

bool is_valid_segment(std::string_view segment) {
  if (segment.empty()) return false;
  return std::all_of(segment.begin(), segment.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

Path Path::parse(std::string_view text) {
  if (!text.empty() && text.front() == '/') text.remove_prefix(1);
  if (!text.empty() && text.back() == '/') text.remove_suffix(1);
  std::vector<std::string> segments;
  if (text.empty()) return Path{};

  std::size_t start = 0;
  while (true) {
    const std::size_t slash = text.find('/', start);
    const std::string_view seg =
        text.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
    if (!is_valid_segment(seg)) {
      throw ValidationError("invalid path segment '" + std::string(seg) + "'");
    }
    segments.emplace_back(seg);
    if (segments.size() > kMaxPathDepth) throw ValidationError("path deeper than 32 segments");
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return Path{std::move(segments)};
}

Path Path::from_segments(std::vector<std::string> segments) {
  if (segments.size() > kMaxPathDepth) throw ValidationError("path deeper than 32 segments");
  for (const auto& s : segments) {
    if (!is_valid_segment(s)) throw ValidationError("invalid path segment '" + s + "'");
  }
  return Path{std::move(segments)};
}

std::string Path::str() const {
  if (segments_.empty()) return "/";
  std::string out;
  for (const auto& s : segments_) {
    out += '/';
    out += s;
  }
  return out;
}

Path Path::child(std::string_view segment) const {
  auto segments = segments_;
  segments.emplace_back(segment);
  return from_segments(std::move(segments));
}

Path Path::parent() const {
  if (segments_.empty()) return *this;
  return Path{std::vector<std::string>(segments_.begin(), segments_.end() - 1)};
}

bool Path::is_ancestor_or_self_of(const Path& other) const {
  if (segments_.size() > other.segments_.size()) return false;
  return std::equal(segments_.begin(), segments_.end(), other.segments_.begin());
}

Path Path::relativize(const Path& other) const {
  return Path{std::vector<std::string>(
      other.segments_.begin() + static_cast<std::ptrdiff_t>(segments_.size()),
      other.segments_.end())};
}

}  // namespace sonogrid::rtdb

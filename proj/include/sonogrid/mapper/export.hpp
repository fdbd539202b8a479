#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sonogrid::net {
struct Endpoint;
}

namespace sonogrid::mapper {

/// Inclusive on both ends; an unset bound is open.
struct TimeRange {
  std::optional<std::int64_t> from_ms;
  std::optional<std::int64_t> to_ms;
  bool contains(std::int64_t ts) const {
    return (!from_ms || ts >= *from_ms) && (!to_ms || ts <= *to_ms);
  }
};

struct LogRow {
  std::string node_id;
  std::int64_t ts = 0;
  double lat = 0.0;
  double lon = 0.0;
  double spl_db = 0.0;
  std::uint64_t seq = 0;
};

struct CollectedLog {
  std::vector<LogRow> rows;  // sorted by (node_id, seq)
  std::size_t skipped = 0;   // malformed log entries
};

/// Rows from every /nodes/{id}/log/{seq} entry of a /nodes value.
CollectedLog collect_log(const nlohmann::json& nodes, const TimeRange& range);

/// RFC 4180 field: quoted when it holds a comma, quote, CR or LF.
std::string csv_field(std::string_view text);

inline constexpr std::string_view kCsvHeader = "node_id,ts,lat,lon,spl_db,seq";
std::string to_csv(const std::vector<LogRow>& rows);

struct LeqBucket {
  std::string node_id;
  std::int64_t bucket_start = 0;
  std::int64_t bucket_end = 0;  // exclusive
  std::size_t readings = 0;
  double leq_db = 0.0;
};

/// Epoch-aligned buckets of width `bucket_ms`; empty buckets are omitted.
std::vector<LeqBucket> leq_summary(const std::vector<LogRow>& rows, std::int64_t bucket_ms);

inline constexpr std::string_view kLeqHeader = "node_id,bucket_start,bucket_end,readings,leq_db";
std::string to_csv(const std::vector<LeqBucket>& buckets);

/// Writes via a sibling temp file, fsync and rename. Throws
/// std::runtime_error naming the problem; nothing is left behind on failure.
void write_file_atomically(const std::filesystem::path& out, std::string_view content);

/// GET /nodes from a database server. Throws std::runtime_error on any failure.
nlohmann::json fetch_nodes(const net::Endpoint& rtdb, const std::string& token);

/// Parses a duration such as "60s", "5m", "1h", "250ms" or a bare number of seconds.
std::int64_t parse_duration_ms(std::string_view text);

}  // namespace sonogrid::mapper

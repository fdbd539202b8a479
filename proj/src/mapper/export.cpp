#include "sonogrid/mapper/export.hpp"

#include "sonogrid/dsp.hpp"
#include "sonogrid/errors.hpp"
#include "sonogrid/net/http.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <stdexcept>
#include <tuple>

namespace sonogrid::mapper {

using json = nlohmann::json;

namespace {

std::optional<LogRow> parse_row(const std::string& node_id, const std::string& key, const json& entry) {
  if (!entry.is_object()) return std::nullopt;
  std::uint64_t seq = 0;
  auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), seq);
  if (ec != std::errc{} || end != key.data() + key.size()) return std::nullopt;
  auto num = [&](const char* k) -> std::optional<double> {
    auto it = entry.find(k);
    if (it == entry.end() || !it->is_number()) return std::nullopt;
    return it->get<double>();
  };
  const auto ts = entry.find("ts");
  const auto lat = num("lat");
  const auto lon = num("lon");
  const auto spl = num("spl_db");
  if (ts == entry.end() || !ts->is_number_integer() || !lat || !lon || !spl) return std::nullopt;
  return LogRow{node_id, ts->get<std::int64_t>(), *lat, *lon, *spl, seq};
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

CollectedLog collect_log(const json& nodes, const TimeRange& range) {
  CollectedLog out;
  if (!nodes.is_object()) return out;
  for (const auto& [id, node] : nodes.items()) {
    if (!node.is_object()) continue;
    auto log = node.find("log");
    if (log == node.end() || !log->is_object()) continue;
    for (const auto& [key, entry] : log->items()) {
      auto row = parse_row(id, key, entry);
      if (!row) {
        ++out.skipped;
        continue;
      }
      if (range.contains(row->ts)) out.rows.push_back(std::move(*row));
    }
  }
  std::sort(out.rows.begin(), out.rows.end(), [](const LogRow& a, const LogRow& b) {
    return std::tie(a.node_id, a.seq) < std::tie(b.node_id, b.seq);
  });
  return out;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string to_csv(const std::vector<LogRow>& rows) {
  std::string out(kCsvHeader);
  out += "\r\n";
  for (const auto& r : rows) {
    out += csv_field(r.node_id) + ',' + std::to_string(r.ts) + ',' + json(r.lat).dump() + ',' + json(r.lon).dump() +
           ',' + fixed2(r.spl_db) + ',' + std::to_string(r.seq) + "\r\n";
  }
  return out;
}

std::vector<LeqBucket> leq_summary(const std::vector<LogRow>& rows, std::int64_t bucket_ms) {
  if (bucket_ms <= 0) throw ValidationError("bucket must be positive");
  std::map<std::pair<std::string, std::int64_t>, std::vector<double>> groups;
  for (const auto& r : rows) {
    const std::int64_t start = (r.ts >= 0 ? r.ts / bucket_ms : (r.ts - bucket_ms + 1) / bucket_ms) * bucket_ms;
    groups[{r.node_id, start}].push_back(r.spl_db);
  }
  std::vector<LeqBucket> out;
  for (const auto& [key, levels] : groups) {
    const auto level = dsp::leq(levels);
    if (!level) continue;
    out.push_back({key.first, key.second, key.second + bucket_ms, levels.size(), *level});
  }
  return out;
}

std::string to_csv(const std::vector<LeqBucket>& buckets) {
  std::string out(kLeqHeader);
  out += "\r\n";
  for (const auto& b : buckets) {
    out += csv_field(b.node_id) + ',' + std::to_string(b.bucket_start) + ',' + std::to_string(b.bucket_end) + ',' +
           std::to_string(b.readings) + ',' + fixed2(b.leq_db) + "\r\n";
  }
  return out;
}

void write_file_atomically(const std::filesystem::path& out, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw std::runtime_error("output directory does not exist: " + dir.string());

  std::string tmpl = (dir / ("." + out.filename().string() + ".XXXXXX")).string();
  const int fd = ::mkstemp(tmpl.data());
  if (fd < 0) throw std::runtime_error("cannot create temp file in " + dir.string() + ": " + std::strerror(errno));
  auto fail = [&](const std::string& what) {
    const int err = errno;
    ::close(fd);
    ::unlink(tmpl.c_str());
    throw std::runtime_error(what + ": " + std::strerror(err));
  };
  std::size_t off = 0;
  while (off < content.size()) {
    const ssize_t n = ::write(fd, content.data() + off, content.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write " + tmpl);
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fchmod(fd, 0644) != 0) fail("chmod " + tmpl);
  if (::fsync(fd) != 0) fail("fsync " + tmpl);
  ::close(fd);
  if (::rename(tmpl.c_str(), out.c_str()) != 0) {
    const int err = errno;
    ::unlink(tmpl.c_str());
    throw std::runtime_error("rename to " + out.string() + ": " + std::strerror(err));
  }
}

json fetch_nodes(const net::Endpoint& rtdb, const std::string& token) {
  net::HttpClient client(rtdb, std::chrono::seconds(10));
  const auto r = client.get(net::rtdb_target("/nodes", token));
  if (r.transport_failure()) throw std::runtime_error("database unreachable at " + rtdb.url() + ": " + r.error);
  if (!r.ok()) throw std::runtime_error("database returned HTTP " + std::to_string(r.status) + ": " + r.body);
  try {
    return json::parse(r.body);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("database returned malformed JSON: ") + e.what());
  }
}

std::int64_t parse_duration_ms(std::string_view text) {
  std::size_t digits = 0;
  while (digits < text.size() && (std::isdigit(static_cast<unsigned char>(text[digits])) || text[digits] == '.')) {
    ++digits;
  }
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + digits, value);
  if (digits == 0 || ec != std::errc{} || end != text.data() + digits) {
    throw ValidationError("bad duration '" + std::string(text) + "'");
  }
  const std::string_view unit = text.substr(digits);
  double scale = 0.0;
  if (unit.empty() || unit == "s") scale = 1000.0;
  else if (unit == "ms") scale = 1.0;
  else if (unit == "m" || unit == "min") scale = 60'000.0;
  else if (unit == "h") scale = 3'600'000.0;
  else throw ValidationError("bad duration unit in '" + std::string(text) + "'");
  const auto ms = static_cast<std::int64_t>(std::llround(value * scale));
  if (ms <= 0) throw ValidationError("duration must be positive: '" + std::string(text) + "'");
  return ms;
}

}  // namespace sonogrid::mapper

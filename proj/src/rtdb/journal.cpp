#include "sonogrid/rtdb/journal.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace sonogrid::rtdb {

namespace {

std::uint32_t crc_of(const std::string& text) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
}

std::string seal(json record) {
  const std::uint32_t crc = crc_of(record.dump());
  record["crc"] = crc;
  return record.dump() + "\n";
}

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

// Parses and verifies one line; returns false when the record is unusable.
bool open_record(const std::string& line, json& out) {
  json parsed = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!parsed.is_object()) return false;
  auto crc_it = parsed.find("crc");
  if (crc_it == parsed.end() || !crc_it->is_number_unsigned()) return false;
  const auto crc = crc_it->get<std::uint64_t>();
  parsed.erase("crc");
  if (crc != crc_of(parsed.dump())) return false;
  out = std::move(parsed);
  return true;
}

void apply(json& tree, const json& record, std::size_t line_no) {
  const auto fail = [&](const std::string& why) {
    throw JournalCorruption("journal line " + std::to_string(line_no) + ": " + why);
  };
  if (record.value("kind", "") == "snapshot") {
    tree = record.at("body");
    return;
  }
  const std::string verb = record.value("verb", "");
  if (!record.contains("path") || !record["path"].is_string()) fail("missing path");
  const Path path = Path::parse(record["path"].get<std::string>());
  if (verb == "put") {
    set_at(tree, path, record.at("body"));
  } else if (verb == "patch") {
    merge_at(tree, path, record.at("body"));
  } else {
    fail("unknown verb '" + verb + "'");
  }
}

}  // namespace

const char* to_string(Verb verb) { return verb == Verb::kPut ? "put" : "patch"; }

std::string encode_record(const WriteRecord& record) {
  return seal(json{{"seq", record.seq},
                   {"verb", to_string(record.verb)},
                   {"path", record.path.str()},
                   {"body", record.body},
                   {"ts", record.ts}});
}

std::string encode_snapshot(const json& tree, std::uint64_t seq, std::int64_t ts) {
  return seal(json{{"kind", "snapshot"}, {"seq", seq}, {"body", tree}, {"ts", ts}});
}

Recovery recover(const std::filesystem::path& file) {
  Recovery out;
  std::ifstream in(file, std::ios::binary);
  if (!in) return out;
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  // Split into lines, remembering whether each one was newline-terminated.
  struct Line {
    std::string text;
    std::size_t end;  // offset just past the line (including '\n')
    bool terminated;
  };
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      lines.push_back({content.substr(pos), content.size(), false});
      break;
    }
    lines.push_back({content.substr(pos, nl - pos), nl + 1, true});
    pos = nl + 1;
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool last = i + 1 == lines.size();
    json record;
    const bool ok = lines[i].terminated && open_record(lines[i].text, record);
    if (!ok) {
      if (last) {
        out.discarded_torn_tail = true;
        break;
      }
      throw JournalCorruption("journal " + file.string() + " line " + std::to_string(i + 1) +
                              ": record fails checksum or does not parse");
    }
    const auto seq = record.value("seq", std::uint64_t{0});
    if (out.records > 0 && seq <= out.last_seq) {
      throw JournalCorruption("journal " + file.string() + " line " + std::to_string(i + 1) +
                              ": sequence " + std::to_string(seq) + " does not increase");
    }
    apply(out.tree, record, i + 1);
    out.last_seq = seq;
    out.last_ts = record.value("ts", std::int64_t{0});
    out.records += 1;
    out.valid_bytes = lines[i].end;
  }
  return out;
}

Journal::Journal(std::filesystem::path file, bool sync, std::uintmax_t valid_bytes)
    : file_(std::move(file)), sync_(sync) {
  if (std::filesystem::exists(file_) && std::filesystem::file_size(file_) > valid_bytes) {
    std::filesystem::resize_file(file_, valid_bytes);
  }
  open_for_append();
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

void Journal::open_for_append() {
  fd_ = ::open(file_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw JournalIoError(errno_text("cannot open journal " + file_.string()));
}

void Journal::write_all(int fd, const std::string& data) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw JournalIoError(errno_text("journal write failed"));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

void Journal::append(const WriteRecord& record) {
  write_all(fd_, encode_record(record));
  if (sync_ && ::fdatasync(fd_) != 0) throw JournalIoError(errno_text("journal fsync failed"));
}

void Journal::compact(const json& tree, std::uint64_t seq, std::int64_t ts) {
  const std::filesystem::path tmp = file_.string() + ".compact";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw JournalIoError(errno_text("cannot create " + tmp.string()));
  try {
    write_all(fd, encode_snapshot(tree, seq, ts));
    if (::fsync(fd) != 0) throw JournalIoError(errno_text("fsync of compacted journal failed"));
  } catch (...) {
    ::close(fd);
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
  ::close(fd);

  std::error_code ec;
  std::filesystem::rename(tmp, file_, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw JournalIoError("cannot replace journal: " + ec.message());
  }
  const auto dir = file_.has_parent_path() ? file_.parent_path() : std::filesystem::path(".");
  if (const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC); dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
  ::close(fd_);
  open_for_append();
}

}  // namespace sonogrid::rtdb

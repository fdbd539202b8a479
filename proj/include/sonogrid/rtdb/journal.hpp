#pragma once

// Append-only write journal. One JSON record per line, each carrying a CRC32
// over its own canonical serialization (without the crc field):
//
//   {"body":...,"crc":N,"path":"/a/b","seq":7,"ts":1700000000000,"verb":"put"}
//   {"body":{...tree...},"crc":N,"kind":"snapshot","seq":42,"ts":...}
//
// A trailing record that fails to parse or verify is a torn write and is
// discarded on recovery; a bad record anywhere else is fatal.

#include "sonogrid/rtdb/path.hpp"
#include "sonogrid/rtdb/tree.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace sonogrid::rtdb {

enum class Verb { kPut, kPatch };

const char* to_string(Verb verb);

struct WriteRecord {
  std::uint64_t seq = 0;
  Verb verb = Verb::kPut;
  Path path;
  json body;
  std::int64_t ts = 0;
};

class JournalCorruption : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class JournalIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Recovery {
  json tree;
  std::uint64_t last_seq = 0;
  std::int64_t last_ts = 0;
  std::size_t records = 0;
  bool discarded_torn_tail = false;
  std::uintmax_t valid_bytes = 0;
};

std::string encode_record(const WriteRecord& record);
std::string encode_snapshot(const json& tree, std::uint64_t seq, std::int64_t ts);

/// Replays a journal file. A missing or empty file yields an empty tree.
Recovery recover(const std::filesystem::path& file);

class Journal {
 public:
  /// Opens `file` for appending, truncating any torn tail found by `recover`.
  Journal(std::filesystem::path file, bool sync, std::uintmax_t valid_bytes);
  ~Journal();

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  /// Durable once this returns (when sync is on).
  void append(const WriteRecord& record);

  /// Atomically replaces the file with a single snapshot record. On failure
  /// the original file is left intact and JournalIoError is thrown.
  void compact(const json& tree, std::uint64_t seq, std::int64_t ts);

  const std::filesystem::path& file() const { return file_; }

 private:
  void open_for_append();
  void write_all(int fd, const std::string& data);

  std::filesystem::path file_;
  bool sync_;
  int fd_ = -1;
};

}  // namespace sonogrid::rtdb

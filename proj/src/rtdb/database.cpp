#include "sonogrid/rtdb/database.hpp"

#include "sonogrid/errors.hpp"

#include <algorithm>
#include <chrono>

namespace sonogrid::rtdb {

namespace {

std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string event_payload(const Event& event) {
  return R"({"path":)" + json(event.path.str()).dump() + R"(,"data":)" + event.data.dump() + "}";
}

void fold_event(json& mirror, const Event& event) {
  if (event.kind == Verb::kPut) {
    set_at(mirror, event.path, event.data);
  } else {
    merge_at(mirror, event.path, event.data);
  }
}

Database::Database(DatabaseOptions options) : options_(std::move(options)) {
  if (options_.auth_token.empty()) throw ValidationError("auth token must not be empty");
  if (options_.subscriber_buffer == 0) throw ValidationError("subscriber buffer must be positive");
  if (!options_.now_ms) options_.now_ms = system_now_ms;
  if (options_.journal) {
    Recovery r = recover(*options_.journal);
    tree_ = std::move(r.tree);
    last_seq_ = r.last_seq;
    last_ts_ = r.last_ts;
    journal_ = std::make_unique<Journal>(*options_.journal, options_.sync_writes, r.valid_bytes);
  }
}

Database::~Database() {
  std::unique_lock lock(tree_mutex_);
  for (auto& weak : subscribers_) {
    if (auto sub = weak.lock()) sub->close();
  }
}

bool Database::authorized(std::string_view token) const { return token == options_.auth_token; }

WriteAck Database::put(const Path& path, const json& value, std::string_view token) {
  if (!authorized(token)) throw AuthError();
  json body = normalize(value);
  json echo = body;
  return commit(Verb::kPut, path, std::move(body), std::move(echo));
}

WriteAck Database::patch(const Path& path, const json& fields, std::string_view token) {
  if (!authorized(token)) throw AuthError();
  json body = normalize_patch(fields);
  return commit(Verb::kPatch, path, std::move(body), fields);
}

json Database::get(const Path& path, std::string_view token) const {
  if (!authorized(token)) throw AuthError();
  std::shared_lock lock(tree_mutex_);
  return get_at(tree_, path);
}

WriteAck Database::commit(Verb verb, const Path& path, json body, json echo) {
  std::lock_guard commit_lock(commit_mutex_);
  WriteRecord record{last_seq_ + 1, verb, path, std::move(body), options_.now_ms()};
  if (journal_) journal_->append(record);

  std::unique_lock lock(tree_mutex_);
  if (verb == Verb::kPut) {
    set_at(tree_, path, record.body);
  } else {
    merge_at(tree_, path, record.body);
  }
  last_seq_ = record.seq;
  last_ts_ = record.ts;
  fan_out(record);
  return WriteAck{record.seq, std::move(echo)};
}

void Database::fan_out(const WriteRecord& record) {
  std::erase_if(subscribers_, [&](const std::weak_ptr<Subscription>& weak) {
    auto sub = weak.lock();
    if (!sub || sub->closed()) return true;

    const Path& root = sub->root();
    if (root.is_ancestor_or_self_of(record.path)) {
      sub->deliver(Event{record.seq, record.verb, root.relativize(record.path), record.body});
    } else if (record.path.is_ancestor_or_self_of(root)) {
      // Write above the subscription root: deliver the root's new value when touched.
      bool touched = record.verb == Verb::kPut;
      if (!touched) {
        const std::string& next = root.segments()[record.path.depth()];
        touched = record.body.contains(next);
      }
      if (touched) sub->deliver(Event{record.seq, Verb::kPut, Path{}, get_at(tree_, root)});
    }
    return sub->closed();
  });
}

std::shared_ptr<Subscription> Database::subscribe(const Path& path, std::string_view token) {
  if (!authorized(token)) throw AuthError();
  std::unique_lock lock(tree_mutex_);
  auto sub = std::make_shared<Subscription>(path, last_seq_, options_.subscriber_buffer);
  sub->deliver(Event{last_seq_, Verb::kPut, Path{}, get_at(tree_, path)});
  subscribers_.push_back(sub);
  return sub;
}

void Database::compact() {
  std::lock_guard commit_lock(commit_mutex_);
  if (!journal_) return;
  std::shared_lock lock(tree_mutex_);
  journal_->compact(tree_, last_seq_, last_ts_);
}

std::uint64_t Database::last_seq() const {
  std::shared_lock lock(tree_mutex_);
  return last_seq_;
}

std::size_t Database::subscriber_count() const {
  std::shared_lock lock(tree_mutex_);
  return static_cast<std::size_t>(std::count_if(
      subscribers_.begin(), subscribers_.end(), [](const auto& w) {
        auto s = w.lock();
        return s && !s->closed();
      }));
}

}  // namespace sonogrid::rtdb

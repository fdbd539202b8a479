#include "sonogrid/node/agent.hpp"

#include "sonogrid/errors.hpp"
#include "sonogrid/rtdb/path.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

namespace sonogrid::node {

using nlohmann::json;

void validate(const NodeConfig& cfg) {
  if (cfg.node_id.empty() || !rtdb::is_valid_segment(cfg.node_id)) {
    throw ValidationError("node_id '" + cfg.node_id + "' must be non-empty and use only [A-Za-z0-9_-]");
  }
  if (!(cfg.lat >= -90.0 && cfg.lat <= 90.0)) throw ValidationError("lat out of range for " + cfg.node_id);
  if (!(cfg.lon >= -180.0 && cfg.lon <= 180.0)) throw ValidationError("lon out of range for " + cfg.node_id);
  if (cfg.publish_interval_ms < kMinIntervalMs) {
    throw ValidationError("publish_interval_ms must be at least 100 for " + cfg.node_id);
  }
  if (!(cfg.sample_rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
  if (!dsp::is_power_of_two(cfg.block_size) || cfg.block_size < 2) {
    throw ValidationError("block size must be a power of two");
  }
  dsp::validate(cfg.calibration);
  validate(cfg.source);
}

double round_to_centi(double db) { return std::round(db * 100.0) / 100.0; }

std::string ReadingMessage::to_json() const {
  char spl[32];
  std::snprintf(spl, sizeof spl, "%.2f", spl_db);
  return R"({"node_id":)" + json(node_id).dump() + R"(,"ts":)" + std::to_string(ts) + R"(,"spl_db":)" + spl +
         R"(,"lat":)" + json(lat).dump() + R"(,"lon":)" + json(lon).dump() + R"(,"seq":)" + std::to_string(seq) +
         "}";
}

HttpTransport::HttpTransport(const net::Endpoint& endpoint, std::string token, std::chrono::milliseconds timeout)
    : client_(endpoint, timeout), token_(std::move(token)) {}

net::HttpResult HttpTransport::put(const std::string& path, const std::string& body) {
  return client_.put(net::rtdb_target(path, token_), body);
}

net::HttpResult HttpTransport::get(const std::string& path) {
  return client_.get(net::rtdb_target(path, token_));
}

TransportFactory http_transport_factory() {
  return [](const NodeConfig& cfg) -> std::unique_ptr<Transport> {
    return std::make_unique<HttpTransport>(net::Endpoint::parse(cfg.server_url), cfg.auth_token);
  };
}

namespace {

std::size_t blocks_for(const NodeConfig& cfg) {
  const double samples = static_cast<double>(cfg.publish_interval_ms) * cfg.sample_rate_hz / 1000.0;
  const auto blocks = static_cast<std::size_t>(std::ceil(samples / static_cast<double>(cfg.block_size)));
  return std::max<std::size_t>(blocks, 1);
}

}  // namespace

NodeAgent::NodeAgent(NodeConfig cfg, Clock& clock, std::unique_ptr<Transport> transport, AgentOptions options)
    : cfg_((validate(cfg), std::move(cfg))),
      clock_(clock),
      transport_(std::move(transport)),
      options_(std::move(options)),
      source_(cfg_.source),
      meter_{cfg_.calibration, cfg_.weighting, dsp::WindowKind::kRectangular},
      blocks_per_interval_(blocks_for(cfg_)),
      next_seq_(options_.initial_seq + 1),
      jitter_rng_(cfg_.source.seed ^ std::hash<std::string>{}(cfg_.node_id)) {
  if (!transport_) throw ValidationError("node agent needs a transport");
  summary_.node_id = cfg_.node_id;
}

ReadingMessage NodeAgent::measure_once() {
  const std::int64_t now = clock_.now_ms();
  const double block_ms = static_cast<double>(cfg_.block_size) * 1000.0 / cfg_.sample_rate_hz;
  std::vector<dsp::SampleBlock> blocks;
  blocks.reserve(blocks_per_interval_);
  for (std::size_t i = 0; i < blocks_per_interval_; ++i) {
    const auto remaining = static_cast<double>(blocks_per_interval_ - 1 - i) * block_ms;
    blocks.push_back(source_.next_block(cfg_.block_size, cfg_.sample_rate_hz,
                                        now - static_cast<std::int64_t>(std::llround(remaining))));
  }
  const dsp::SplReading reading = dsp::measure_interval(blocks, meter_);
  ++summary_.measured;
  return ReadingMessage{cfg_.node_id, now, round_to_centi(reading.spl_db), cfg_.lat, cfg_.lon, next_seq_++};
}

void NodeAgent::enqueue(const ReadingMessage& msg) {
  if (latest_) ++summary_.superseded;
  latest_ = msg;
  log_queue_.push_back(msg);
  while (log_queue_.size() > options_.retry.max_log_queue) {
    log_queue_.pop_front();
    ++summary_.dropped;
  }
}

bool NodeAgent::publish(const ReadingMessage& msg) {
  enqueue(msg);
  attempt(false);
  return !has_pending();
}

NodeAgent::Outcome NodeAgent::send(const std::string& path, const ReadingMessage& msg) {
  const net::HttpResult r = transport_->put(path, msg.to_json());
  if (r.ok()) return Outcome::kDelivered;
  summary_.last_error = r.transport_failure() ? r.error : "HTTP " + std::to_string(r.status) + " " + r.body;
  if (r.status == 401 || r.status == 403) {
    summary_.auth_failed = true;
    return Outcome::kAuth;
  }
  if (r.transport_failure() || r.status >= 500 || r.status == 408 || r.status == 429) return Outcome::kRetry;
  return Outcome::kRejected;
}

void NodeAgent::schedule_retry() {
  const auto& p = options_.retry;
  backoff_ms_ = backoff_ms_ == 0 ? p.base_ms
                                 : std::min<std::int64_t>(p.cap_ms, std::llround(backoff_ms_ * p.factor));
  const double u = static_cast<double>(jitter_rng_() >> 11) * 0x1.0p-53;
  const double delay = static_cast<double>(backoff_ms_) * (1.0 - p.jitter + p.jitter * u);
  next_attempt_ms_ = clock_.now_ms() + std::max<std::int64_t>(1, std::llround(delay));
  ++summary_.retried;
}

void NodeAgent::attempt(bool ignore_backoff, std::optional<std::int64_t> deadline) {
  if (summary_.auth_failed) return;
  if (!ignore_backoff && clock_.now_ms() < next_attempt_ms_) return;
  const std::string base = "/nodes/" + cfg_.node_id;

  if (latest_) {
    switch (send(base + "/latest", *latest_)) {
      case Outcome::kDelivered:
        ++summary_.latest_published;
        if (options_.on_latest_ack) options_.on_latest_ack(*latest_);
        latest_.reset();
        break;
      case Outcome::kRejected: latest_.reset(); break;
      case Outcome::kRetry: schedule_retry(); return;
      case Outcome::kAuth: return;
    }
  }
  while (!log_queue_.empty()) {
    if (deadline && clock_.now_ms() >= *deadline) return;
    const ReadingMessage& msg = log_queue_.front();
    switch (send(base + "/log/" + std::to_string(msg.seq), msg)) {
      case Outcome::kDelivered: ++summary_.published; break;
      case Outcome::kRejected: ++summary_.dropped; break;
      case Outcome::kRetry: schedule_retry(); return;
      case Outcome::kAuth: return;
    }
    log_queue_.pop_front();
  }
  backoff_ms_ = 0;
  next_attempt_ms_ = 0;
}

void NodeAgent::resume_from_server() {
  const net::HttpResult r = transport_->get("/nodes/" + cfg_.node_id + "/latest/seq");
  if (!r.ok()) return;
  try {
    const json v = json::parse(r.body);
    if (v.is_number_unsigned()) next_seq_ = std::max<std::uint64_t>(next_seq_, v.get<std::uint64_t>() + 1);
  } catch (const json::exception&) {
  }
}

RunSummary NodeAgent::run(std::stop_token stop) {
  if (options_.resume_seq) resume_from_server();
  const std::int64_t interval = cfg_.publish_interval_ms;
  std::int64_t tick = clock_.now_ms();
  bool stopped = false;
  const std::int64_t end = options_.run_until_ms.value_or(std::numeric_limits<std::int64_t>::max());
  while (!stopped && !summary_.auth_failed && tick < end) {
    if (!clock_.sleep_until(tick, stop)) break;
    publish(measure_once());

    tick += interval;
    const std::int64_t now = clock_.now_ms();
    if (tick <= now) tick += ((now - tick) / interval + 1) * interval;  // overran: stay on the grid

    while (has_pending() && !summary_.auth_failed && next_attempt_ms_ < std::min(tick, end)) {
      if (!clock_.sleep_until(next_attempt_ms_, stop)) {
        stopped = true;
        break;
      }
      attempt(false);
    }
  }
  return finish();
}

RunSummary NodeAgent::finish() {
  // Best effort: a single pass, abandoned on the first failure or when the budget runs out.
  if (has_pending()) attempt(true, clock_.now_ms() + options_.retry.flush_budget_ms);
  summary_.pending = log_queue_.size();
  return summary_;
}

}  // namespace sonogrid::node

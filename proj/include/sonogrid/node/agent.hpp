#pragma once

#include "sonogrid/dsp.hpp"
#include "sonogrid/net/http.hpp"
#include "sonogrid/node/clock.hpp"
#include "sonogrid/node/signal_source.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stop_token>
#include <string>

namespace sonogrid::node {

inline constexpr std::int64_t kMinIntervalMs = 100;

struct NodeConfig {
  std::string node_id;
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t publish_interval_ms = 2000;
  dsp::Calibration calibration;
  SignalSourceSpec source;
  std::string server_url;
  std::string auth_token;
  dsp::Weighting weighting = dsp::Weighting::kNone;
  double sample_rate_hz = dsp::kDefaultSampleRateHz;
  std::size_t block_size = dsp::kDefaultBlockSize;
};

void validate(const NodeConfig& cfg);

struct ReadingMessage {
  std::string node_id;
  std::int64_t ts = 0;
  double spl_db = 0.0;  // already rounded to 2 decimals
  double lat = 0.0;
  double lon = 0.0;
  std::uint64_t seq = 0;

  /// Wire form; spl_db is printed with exactly two decimals.
  std::string to_json() const;
  bool operator==(const ReadingMessage&) const = default;
};

double round_to_centi(double db);

/// Per-node HTTP surface against the database. Paths are database paths
/// such as "/nodes/n1/latest"; the implementation adds ".json" and auth.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual net::HttpResult put(const std::string& path, const std::string& body) = 0;
  virtual net::HttpResult get(const std::string& path) = 0;
};

class HttpTransport final : public Transport {
 public:
  HttpTransport(const net::Endpoint& endpoint, std::string token,
                std::chrono::milliseconds timeout = std::chrono::milliseconds(1500));
  net::HttpResult put(const std::string& path, const std::string& body) override;
  net::HttpResult get(const std::string& path) override;

 private:
  net::HttpClient client_;
  std::string token_;
};

using TransportFactory = std::function<std::unique_ptr<Transport>(const NodeConfig&)>;
TransportFactory http_transport_factory();

struct RetryPolicy {
  std::int64_t base_ms = 500;
  double factor = 2.0;
  std::int64_t cap_ms = 8000;
  double jitter = 0.5;  // fraction of the delay that is randomized
  std::size_t max_log_queue = 1000;
  std::int64_t flush_budget_ms = 2000;
};

struct RunSummary {
  std::string node_id;
  std::uint64_t measured = 0;
  std::uint64_t published = 0;  // log entries acknowledged
  std::uint64_t latest_published = 0;
  std::uint64_t superseded = 0;  // latest values replaced before delivery
  std::uint64_t retried = 0;
  std::uint64_t dropped = 0;  // log entries lost to queue overflow or 4xx
  std::uint64_t pending = 0;  // log entries still queued at exit
  bool auth_failed = false;
  std::string last_error;
};

struct AgentOptions {
  RetryPolicy retry;
  /// Seq of the last reading already published; the first new one gets +1.
  std::uint64_t initial_seq = 0;
  /// Continue numbering after the server's /latest seq when it is higher.
  bool resume_seq = false;
  /// Called after the server acknowledges a /latest PUT.
  std::function<void(const ReadingMessage&)> on_latest_ack;
  /// run() takes no measurement at or after this time, then flushes and returns.
  std::optional<std::int64_t> run_until_ms;
};

class NodeAgent {
 public:
  NodeAgent(NodeConfig cfg, Clock& clock, std::unique_ptr<Transport> transport, AgentOptions options = {});

  /// One interval's worth of blocks through the meter, stamped with the
  /// current time and the next seq.
  ReadingMessage measure_once();

  /// Queues `msg` and tries to deliver everything pending. Returns true
  /// when nothing is left pending.
  bool publish(const ReadingMessage& msg);

  /// Measure and publish every interval until `stop`, then flush.
  RunSummary run(std::stop_token stop);

  bool has_pending() const { return latest_.has_value() || !log_queue_.empty(); }
  std::size_t pending_log() const { return log_queue_.size(); }
  std::int64_t next_attempt_ms() const { return next_attempt_ms_; }
  const RunSummary& summary() const { return summary_; }
  const NodeConfig& config() const { return cfg_; }
  std::size_t blocks_per_interval() const { return blocks_per_interval_; }

 private:
  enum class Outcome { kDelivered, kRejected, kRetry, kAuth };

  void enqueue(const ReadingMessage& msg);
  void attempt(bool ignore_backoff, std::optional<std::int64_t> deadline = std::nullopt);
  Outcome send(const std::string& path, const ReadingMessage& msg);
  void schedule_retry();
  void resume_from_server();
  RunSummary finish();

  NodeConfig cfg_;
  Clock& clock_;
  std::unique_ptr<Transport> transport_;
  AgentOptions options_;
  SignalSource source_;
  dsp::MeterSettings meter_;
  std::size_t blocks_per_interval_;
  std::uint64_t next_seq_;

  std::optional<ReadingMessage> latest_;
  std::deque<ReadingMessage> log_queue_;
  std::int64_t next_attempt_ms_ = 0;
  std::int64_t backoff_ms_ = 0;
  std::mt19937_64 jitter_rng_;
  RunSummary summary_;
};

}  // namespace sonogrid::node

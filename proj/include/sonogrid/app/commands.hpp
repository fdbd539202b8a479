#pragma once

#include "sonogrid/app/scenario.hpp"
#include "sonogrid/mapper/service.hpp"
#include "sonogrid/net/http.hpp"
#include "sonogrid/node/agent.hpp"
#include "sonogrid/rtdb/database.hpp"
#include "sonogrid/rtdb/server.hpp"

#include <chrono>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

namespace sonogrid::app {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Database, its HTTP front end and a mapper fed in-process, as run by `serve`.
class ServeStack {
 public:
  explicit ServeStack(const ScenarioFile& scenario);
  ~ServeStack();
  ServeStack(const ServeStack&) = delete;
  ServeStack& operator=(const ServeStack&) = delete;

  /// Throws std::runtime_error if either address cannot be bound.
  void start();
  /// Stops the mapper, then the database server, then compacts the journal.
  void stop();

  net::Endpoint rtdb_endpoint() const;
  net::Endpoint mapper_endpoint() const;
  rtdb::Database& database() { return *db_; }
  mapper::MapperService& mapper() { return *mapper_; }

 private:
  std::unique_ptr<rtdb::Database> db_;
  std::unique_ptr<rtdb::RtdbServer> server_;
  std::unique_ptr<mapper::MapperService> mapper_;
  std::string mapper_host_;
  bool running_ = false;
};

struct FleetOptions {
  node::TransportFactory transport = node::http_transport_factory();
  std::function<std::unique_ptr<node::Clock>()> make_clock = [] { return std::make_unique<node::SystemClock>(); };
  node::RetryPolicy retry;
  bool resume_seq = true;
  std::function<void(const node::ReadingMessage&)> on_latest_ack;
};

/// Runs one agent thread per node until `duration` elapses on each node's
/// clock or `stop` is requested. Summaries come back in scenario order.
std::vector<node::RunSummary> run_fleet(const std::vector<node::NodeConfig>& nodes,
                                        std::optional<std::chrono::milliseconds> duration, std::stop_token stop,
                                        const FleetOptions& options = {});

std::string format_summary(const node::RunSummary& s);

/// Parses the command line and runs the subcommand; returns an ExitCode.
/// Long-running commands end when `stop` is requested.
int run_cli(int argc, const char* const* argv, std::stop_token stop, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace sonogrid::app

#include "sonogrid/app/commands.hpp"

#include "sonogrid/dsp.hpp"
#include "sonogrid/errors.hpp"
#include "sonogrid/mapper/export.hpp"
#include "sonogrid/mapper/link.hpp"

#include "CLI11.hpp"

#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

namespace sonogrid::app {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

// ---------------------------------------------------------------------------
// ServeStack

ServeStack::ServeStack(const ScenarioFile& scenario) {
  if (scenario.rtdb.token.empty()) throw ValidationError("rtdb token is empty; set rtdb.token or SONOGRID_TOKEN");
  rtdb::DatabaseOptions db;
  db.auth_token = scenario.rtdb.token;
  db.journal = scenario.rtdb.journal;
  db.sync_writes = scenario.rtdb.sync_writes;
  auto mcfg = mapper_config(scenario);
  mapper_host_ = mcfg.host;
  const auto bind = net::Endpoint::parse(scenario.rtdb.bind);

  db_ = std::make_unique<rtdb::Database>(std::move(db));
  rtdb::ServerOptions so;
  so.host = bind.host;
  so.port = bind.port;
  server_ = std::make_unique<rtdb::RtdbServer>(*db_, so);
  mapper_ = std::make_unique<mapper::MapperService>(std::move(mcfg), mapper::local_link(*db_, scenario.rtdb.token));
}

ServeStack::~ServeStack() { stop(); }

void ServeStack::start() {
  server_->start();
  try {
    mapper_->start();
  } catch (...) {
    server_->stop();
    throw;
  }
  running_ = true;
}

void ServeStack::stop() {
  if (!running_) return;
  running_ = false;
  mapper_->stop();
  server_->stop();
  db_->compact();
}

net::Endpoint ServeStack::rtdb_endpoint() const { return {server_->host(), server_->port()}; }

net::Endpoint ServeStack::mapper_endpoint() const { return {mapper_host_, mapper_->port()}; }

// ---------------------------------------------------------------------------
// Fleet

std::vector<node::RunSummary> run_fleet(const std::vector<node::NodeConfig>& nodes,
                                        std::optional<std::chrono::milliseconds> duration, std::stop_token stop,
                                        const FleetOptions& options) {
  std::vector<node::RunSummary> summaries(nodes.size());
  std::stop_source fleet;
  std::stop_callback forward(stop, [&fleet] { fleet.request_stop(); });
  {
    std::vector<std::jthread> threads;
    threads.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      threads.emplace_back([&, i] {
        auto& summary = summaries[i];
        summary.node_id = nodes[i].node_id;
        try {
          auto clock = options.make_clock();
          node::AgentOptions ao;
          ao.retry = options.retry;
          ao.resume_seq = options.resume_seq;
          ao.on_latest_ack = options.on_latest_ack;
          if (duration) ao.run_until_ms = clock->now_ms() + duration->count();
          node::NodeAgent agent(nodes[i], *clock, options.transport(nodes[i]), std::move(ao));
          summary = agent.run(fleet.get_token());
        } catch (const std::exception& e) {
          summary.last_error = e.what();
        }
      });
    }
  }
  return summaries;
}

std::string format_summary(const node::RunSummary& s) {
  std::string line = "node " + s.node_id + ": measured=" + std::to_string(s.measured) +
                     " published=" + std::to_string(s.published) + " retried=" + std::to_string(s.retried) +
                     " dropped=" + std::to_string(s.dropped) + " pending=" + std::to_string(s.pending) +
                     " superseded=" + std::to_string(s.superseded);
  if (s.auth_failed) line += " auth=failed";
  if (!s.last_error.empty()) line += " last_error=\"" + s.last_error + "\"";
  return line;
}

namespace {

// ---------------------------------------------------------------------------
// Helpers

/// Waits for `stop`, or for `limit` when given. Returns true if stopped.
bool wait_for_stop(std::stop_token stop, std::optional<std::chrono::milliseconds> limit) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  if (limit) return cv.wait_for(lock, stop, *limit, [] { return false; }) || stop.stop_requested();
  cv.wait(lock, stop, [] { return false; });
  return true;
}

/// Milliseconds since the epoch, or an ISO-8601 UTC instant such as
/// 2024-05-01T12:00:00Z (fractional seconds allowed).
std::int64_t parse_timestamp(const std::string& text) {
  if (!text.empty() && text.find_first_not_of("0123456789") == std::string::npos) {
    return std::stoll(text);
  }
  std::tm tm{};
  double seconds = 0.0;
  char zone = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%lf%c%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                  &tm.tm_min, &seconds, &zone, &consumed) != 7 ||
      zone != 'Z' || static_cast<std::size_t>(consumed) != text.size() || seconds < 0.0 || seconds >= 61.0) {
    throw ValidationError("bad timestamp '" + text + "': expected epoch milliseconds or YYYY-MM-DDTHH:MM:SSZ");
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  tm.tm_sec = 0;
  const std::time_t base = timegm(&tm);
  return static_cast<std::int64_t>(base) * 1000 + static_cast<std::int64_t>(std::llround(seconds * 1000.0));
}

ScenarioFile scenario_from(const std::string& config, const EnvLookup& env) {
  return config.empty() ? default_scenario(env) : load_scenario(config, env);
}

std::optional<std::chrono::milliseconds> seconds_to_ms(std::optional<double> s) {
  if (!s) return std::nullopt;
  if (!(*s > 0.0)) throw ValidationError("--duration must be positive");
  return std::chrono::milliseconds(std::llround(*s * 1000.0));
}

// ---------------------------------------------------------------------------
// Subcommands

struct ServeArgs {
  std::string config;
  std::optional<double> duration_s;
};

int cmd_serve(const ServeArgs& args, std::stop_token stop, std::ostream& out, std::ostream& err,
              const EnvLookup& env) {
  const auto scenario = scenario_from(args.config, env);
  const auto duration = seconds_to_ms(args.duration_s);
  ServeStack stack(scenario);
  try {
    stack.start();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  out << "rtdb listening on " << stack.rtdb_endpoint().url() << "\n"
      << "mapper listening on " << stack.mapper_endpoint().url() << "\n"
      << std::flush;
  wait_for_stop(stop, duration);
  stack.stop();
  out << "stopped\n" << std::flush;
  return kExitOk;
}

struct NodesArgs {
  std::string config;
  std::optional<double> duration_s;
};

int cmd_nodes(const NodesArgs& args, std::stop_token stop, std::ostream& out, std::ostream& err,
              const EnvLookup& env) {
  const auto scenario = scenario_from(args.config, env);
  if (scenario.nodes.empty()) {
    out << "scenario has no nodes\n";
    return kExitOk;
  }
  for (const auto& n : scenario.nodes) {
    if (n.auth_token.empty()) {
      throw ValidationError("node '" + n.node_id + "' has no token; set rtdb.token or SONOGRID_TOKEN");
    }
  }
  const auto duration = seconds_to_ms(args.duration_s ? args.duration_s : scenario.duration_s);
  out << "running " << scenario.nodes.size() << " node(s)";
  if (duration) out << " for " << duration->count() / 1000.0 << " s";
  out << "\n" << std::flush;

  const auto summaries = run_fleet(scenario.nodes, duration, stop);
  bool failed = false;
  for (const auto& s : summaries) {
    out << format_summary(s) << "\n";
    if (s.auth_failed) {
      err << "error: node " << s.node_id << " was refused by the server (bad token)\n";
      failed = true;
    } else if (!s.last_error.empty() && s.measured == 0) {
      failed = true;
    }
  }
  out << std::flush;
  return failed ? kExitRuntime : kExitOk;
}

struct ExportArgs {
  std::string config;
  std::string server;
  std::string token;
  std::string out;
  std::string from;
  std::string to;
  bool leq = false;
  std::string bucket = "60s";
};

int cmd_export(const ExportArgs& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  const auto scenario = scenario_from(args.config, env);
  const auto endpoint = net::Endpoint::parse(args.server.empty() ? scenario.rtdb.bind : args.server);
  const std::string token = args.token.empty() ? scenario.rtdb.token : args.token;
  if (token.empty()) throw ValidationError("no token; pass --token or set SONOGRID_TOKEN");

  mapper::TimeRange range;
  if (!args.from.empty()) range.from_ms = parse_timestamp(args.from);
  if (!args.to.empty()) range.to_ms = parse_timestamp(args.to);
  if (range.from_ms && range.to_ms && *range.from_ms > *range.to_ms) throw ValidationError("--from is after --to");
  const std::int64_t bucket_ms = mapper::parse_duration_ms(args.bucket);

  const bool to_stdout = args.out == "-";
  const fs::path target(args.out);
  if (!to_stdout) {
    const auto dir = target.parent_path();
    if (!dir.empty() && !fs::is_directory(dir)) {
      throw ValidationError("output directory does not exist: " + dir.string());
    }
  }

  nlohmann::json nodes;
  try {
    nodes = mapper::fetch_nodes(endpoint, token);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  const auto collected = mapper::collect_log(nodes, range);
  std::string csv;
  std::size_t rows = 0;
  if (args.leq) {
    const auto buckets = mapper::leq_summary(collected.rows, bucket_ms);
    rows = buckets.size();
    csv = mapper::to_csv(buckets);
  } else {
    rows = collected.rows.size();
    csv = mapper::to_csv(collected.rows);
  }

  std::ostream& note = to_stdout ? err : out;
  if (collected.skipped > 0) note << "skipped " << collected.skipped << " malformed log entries\n";
  if (to_stdout) {
    out << csv << std::flush;
  } else {
    try {
      mapper::write_file_atomically(target, csv);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
    note << "wrote " << rows << " rows to " << target.string() << "\n";
  }
  return kExitOk;
}

struct ReplayArgs {
  std::string file;
  double rate_hz = dsp::kDefaultSampleRateHz;
  std::size_t block = dsp::kDefaultBlockSize;
  bool spectrum = false;
  std::string weighting = "none";
  double offset_db = dsp::Calibration{}.offset_db;
};

int cmd_replay(const ReplayArgs& args, std::ostream& out, std::ostream& err) {
  if (!(args.rate_hz > 0.0)) throw ValidationError("--rate must be positive");
  if (!dsp::is_power_of_two(args.block) || args.block < dsp::kMinBlockSize) {
    throw ValidationError("--block must be a power of two >= " + std::to_string(dsp::kMinBlockSize));
  }
  dsp::MeterSettings settings;
  settings.calibration.offset_db = args.offset_db;
  if (args.weighting == "A" || args.weighting == "a") {
    settings.weighting = dsp::Weighting::kA;
  } else if (args.weighting != "none") {
    throw ValidationError("--weighting must be 'A' or 'none'");
  }

  std::vector<int> samples;
  try {
    samples = node::load_adc_file(args.file);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  const std::size_t n = args.block;
  const std::size_t blocks = samples.size() / n;
  if (blocks == 0) {
    err << "error: " << args.file << " holds " << samples.size() << " samples, fewer than one block of " << n
        << "\n";
    return kExitRuntime;
  }
  if (samples.size() % n != 0) err << "note: ignoring " << samples.size() % n << " trailing samples\n";

  auto block_at = [&](std::size_t b) {
    dsp::SampleBlock block;
    block.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(b * n),
                         samples.begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
    block.sample_rate_hz = args.rate_hz;
    block.acquired_at = std::llround(static_cast<double>(b * n) * 1000.0 / args.rate_hz);
    return block;
  };

  char line[96];
  if (args.spectrum) {
    const auto last = block_at(blocks - 1);
    dsp::validate(last);
    auto spectrum = dsp::power_spectrum(dsp::fht(dsp::remove_dc(last)));
    if (settings.weighting == dsp::Weighting::kA) spectrum = dsp::a_weight(spectrum);
    out << "bin,freq_hz,power\n";
    for (std::size_t k = 0; k < spectrum.power.size(); ++k) {
      std::snprintf(line, sizeof line, "%zu,%.4f,%.6g\n", k, spectrum.bin_frequency(k), spectrum.power[k]);
      out << line;
    }
    return kExitOk;
  }
  out << "ts_ms,spl_db\n";
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto r = dsp::measure_block(block_at(b), settings);
    std::snprintf(line, sizeof line, "%lld,%.2f\n", static_cast<long long>(r.acquired_at), r.spl_db);
    out << line;
  }
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run_cli(int argc, const char* const* argv, std::stop_token stop, std::ostream& out, std::ostream& err,
            const EnvLookup& env) {
  CLI::App app{"Noise-monitoring network: database, mapper, simulated nodes and export", "sonogrid"};
  app.require_subcommand(1);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the database and the mapper in one process");
  serve_cmd->add_option("--config", serve.config, "Scenario file (YAML)")->required();
  serve_cmd->add_option("--duration", serve.duration_s, "Stop after S seconds");

  NodesArgs nodes;
  auto* nodes_cmd = app.add_subcommand("nodes", "Run the simulated node fleet of a scenario");
  nodes_cmd->add_option("--config", nodes.config, "Scenario file (YAML)")->required();
  nodes_cmd->add_option("--duration", nodes.duration_s, "Stop after S seconds (overrides duration_s)");

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export", "Write logged readings as CSV");
  export_cmd->add_option("--config", exp.config, "Scenario file; supplies the database address and token");
  export_cmd->add_option("--server", exp.server, "Database address host:port");
  export_cmd->add_option("--token", exp.token, "Database token");
  export_cmd->add_option("--out", exp.out, "Output file, or - for standard output")->required();
  export_cmd->add_option("--from", exp.from, "Earliest ts, epoch ms or YYYY-MM-DDTHH:MM:SSZ (inclusive)");
  export_cmd->add_option("--to", exp.to, "Latest ts, epoch ms or YYYY-MM-DDTHH:MM:SSZ (inclusive)");
  export_cmd->add_flag("--leq", exp.leq, "Write per-node Leq buckets instead of raw rows");
  export_cmd->add_option("--bucket", exp.bucket, "Leq bucket width, e.g. 60s, 5m, 1h")->capture_default_str();

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Run the metering chain over a file of ADC counts");
  replay_cmd->add_option("file", replay.file, "One ADC count per line")->required();
  replay_cmd->add_option("--rate", replay.rate_hz, "Sample rate in Hz")->capture_default_str();
  replay_cmd->add_option("--block", replay.block, "Block size (power of two)")->capture_default_str();
  replay_cmd->add_flag("--spectrum", replay.spectrum, "Print the final block's power spectrum instead");
  replay_cmd->add_option("--weighting", replay.weighting, "A or none")->capture_default_str();
  replay_cmd->add_option("--offset", replay.offset_db, "Calibration offset in dB")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve_cmd) return cmd_serve(serve, stop, out, err, env);
    if (*nodes_cmd) return cmd_nodes(nodes, stop, out, err, env);
    if (*export_cmd) return cmd_export(exp, out, err, env);
    if (*replay_cmd) return cmd_replay(replay, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sonogrid::app

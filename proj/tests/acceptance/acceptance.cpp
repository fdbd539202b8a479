// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance            run everything
//   acceptance NAME...    run only the named criteria

#include "oracles.hpp"
#include "rtdb_model.hpp"
#include "temp_dir.hpp"

#include "sonogrid/app/commands.hpp"
#include "sonogrid/app/scenario.hpp"
#include "sonogrid/dsp.hpp"
#include "sonogrid/mapper/grid.hpp"
#include "sonogrid/net/http.hpp"
#include "sonogrid/net/sse.hpp"
#include "sonogrid/node/agent.hpp"
#include "sonogrid/rtdb/database.hpp"
#include "sonogrid/rtdb/journal.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>
#include <vector>

using namespace sonogrid;
using namespace std::chrono_literals;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr const char* kDemo = SONOGRID_SOURCE_DIR "/scenarios/demo.yaml";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double analytic_db(double rms) { return 20.0 * std::log10(rms) + 68.83; }

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

app::EnvLookup no_env() {
  return [](const char*) -> std::optional<std::string> { return std::nullopt; };
}

json get_json(const net::Endpoint& ep, const std::string& target) {
  net::HttpClient http(ep);
  auto r = http.get(target);
  if (!r.ok()) throw std::runtime_error("GET " + target + " -> " + std::to_string(r.status) + " " + r.error);
  return json::parse(r.body);
}

/// Oracle distance for range checks; same sphere, independent formula.
double vincenty_m(double lat1, double lon1, double lat2, double lon2) {
  const long double rad = std::numbers::pi_v<long double> / 180.0L;
  const long double p1 = lat1 * rad, p2 = lat2 * rad, dl = (static_cast<long double>(lon2) - lon1) * rad;
  const long double a = std::cos(p2) * std::sin(dl);
  const long double b = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  const long double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  return static_cast<double>(6'371'000.0L * std::atan2(std::sqrt(a * a + b * b), c));
}

/// For measuring without publishing.
class OfflineTransport final : public node::Transport {
 public:
  net::HttpResult put(const std::string&, const std::string&) override { return {0, "", "offline"}; }
  net::HttpResult get(const std::string&) override { return {0, "", "offline"}; }
};

// ---------------------------------------------------------------------------

Outcome fht_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (std::size_t n : {8u, 16u, 64u, 256u}) {
    for (int i = 0; i < 100; ++i) {
      dsp::CenteredBlock block{oracle::random_block(rng, n), 9600.0};
      const auto got = dsp::fht(block).values;
      worst = std::max(worst, oracle::max_rel_error(got, oracle::cas_sum(block.samples)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5.0, fmt("max rel error %.2e (limit 1e-9), %.2f s (limit 5 s)", worst, secs)};
}

Outcome parseval() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = std::size_t{8} << (i % 6);
    dsp::CenteredBlock block{oracle::random_block(rng, n), 9600.0};
    const double time = oracle::time_energy(block.samples);
    const double spec = dsp::spectral_energy(dsp::power_spectrum(dsp::fht(block)));
    worst = std::max(worst, std::abs(spec - time) / time);
  }
  return {worst <= 1e-9, fmt("max rel error %.2e over 100 blocks (limit 1e-9)", worst)};
}

Outcome sine_spl() {
  // Rounded ADC counts through the block chain, and the node's own source
  // and interval pipeline.
  bool pass = true;
  std::string detail;
  const dsp::MeterSettings meter;
  for (double a : {50.0, 100.0, 255.75, 511.5}) {
    const double expected = std::min(analytic_db(a / std::sqrt(2.0)), 120.0);
    double worst = 0.0;
    for (std::size_t bin : {5u, 27u, 64u}) {
      dsp::SampleBlock block{oracle::sine_counts(a, bin, 256), 9600.0, 0};
      worst = std::max(worst, std::abs(dsp::measure_block(block, meter).spl_db - expected));
    }
    node::NodeConfig cfg;
    cfg.node_id = "probe";
    cfg.source.kind = node::SourceKind::kSine;
    cfg.source.amplitude_counts = a;
    cfg.source.frequency_hz = 1012.5;
    node::FakeClock clock(0);
    node::NodeAgent agent(cfg, clock, std::make_unique<OfflineTransport>());
    const double wire = agent.measure_once().spl_db;
    worst = std::max(worst, std::abs(wire - expected));
    pass = pass && worst <= 0.1;
    detail += fmt("A=%g: %.2f dB expected, max dev %.3f; ", a, expected, worst);
  }
  // Full scale reads the ceiling.
  dsp::SampleBlock full{oracle::sine_counts(511.5, 27, 256), 9600.0, 0};
  const double fs = dsp::measure_block(full, meter).spl_db;
  pass = pass && std::abs(fs - 120.0) <= 0.1;
  detail += fmt("full scale %.2f dB (120 +/- 0.1)", fs);
  return {pass, detail};
}

Outcome a_weighting() {
  const double w100 = dsp::a_weight_db(100.0), w1k = dsp::a_weight_db(1000.0), w10k = dsp::a_weight_db(10000.0);
  const bool pass = std::abs(w100 + 19.1) <= 0.2 && std::abs(w1k) <= 0.2 && std::abs(w10k + 2.5) <= 0.2;
  return {pass, fmt("100 Hz %.2f dB, 1 kHz %.2f dB, 10 kHz %.2f dB (expect -19.1 / 0.0 / -2.5 +/- 0.2)", w100, w1k,
                    w10k)};
}

// --- rtdb -------------------------------------------------------------------

rtdb::DatabaseOptions db_options(std::optional<std::filesystem::path> journal = std::nullopt, bool sync = false) {
  rtdb::DatabaseOptions o;
  o.auth_token = "tok";
  o.journal = std::move(journal);
  o.sync_writes = sync;
  return o;
}

void apply(rtdb::Database& db, oracle::LeafModel& model, const oracle::RandomOp& op) {
  const auto path = rtdb::Path::parse(op.path);
  const auto segs = oracle::split_path(op.path);
  switch (op.kind) {
    case oracle::RandomOp::kPut:
      db.put(path, op.body, "tok");
      model.put(segs, op.body);
      break;
    case oracle::RandomOp::kPatch:
      db.patch(path, op.body, "tok");
      model.patch(segs, op.body);
      break;
    case oracle::RandomOp::kDelete:
      db.remove(path, "tok");
      model.put(segs, nullptr);
      break;
  }
}

std::vector<oracle::RandomOp> workload(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::vector<oracle::RandomOp> ops;
  for (int i = 0; i < n; ++i) ops.push_back(oracle::random_op(rng));
  return ops;
}

/// Model states after each prefix of `ops`; states[k] is after k writes.
std::vector<json> prefix_states(const std::vector<oracle::RandomOp>& ops) {
  oracle::LeafModel model;
  std::vector<json> states{model.get({})};
  for (const auto& op : ops) {
    const auto segs = oracle::split_path(op.path);
    if (op.kind == oracle::RandomOp::kPut) model.put(segs, op.body);
    if (op.kind == oracle::RandomOp::kPatch) model.patch(segs, op.body);
    if (op.kind == oracle::RandomOp::kDelete) model.put(segs, nullptr);
    states.push_back(model.get({}));
  }
  return states;
}

/// Writes `ops` in a child process, reporting each acknowledged index over a
/// pipe, and SIGKILLs it after `kill_after`. Returns the highest acked count.
int write_and_kill(const std::filesystem::path& journal, const std::vector<oracle::RandomOp>& ops,
                   std::chrono::microseconds kill_after) {
  int fds[2];
  if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::close(fds[0]);
    rtdb::Database db(db_options(journal, true));
    oracle::LeafModel scratch;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      apply(db, scratch, ops[i]);
      if (i == ops.size() / 2) db.compact();
      const int acked = static_cast<int>(i + 1);
      if (::write(fds[1], &acked, sizeof acked) != sizeof acked) ::_exit(3);
    }
    ::pause();
    ::_exit(0);
  }
  ::close(fds[1]);
  std::this_thread::sleep_for(kill_after);
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  int last = 0;
  int v = 0;
  while (::read(fds[0], &v, sizeof v) == sizeof v) last = v;
  ::close(fds[0]);
  return last;
}

Outcome rtdb_semantics() {
  const auto t0 = Clock::now();
  std::vector<std::string> failures;
  const auto ops = workload(303, 1000);
  const auto states = prefix_states(ops);

  // Linear history against the model, with subscribers joining along the way.
  {
    rtdb::Database db(db_options());
    oracle::LeafModel model;
    struct Watcher {
      std::shared_ptr<rtdb::Subscription> sub;
      rtdb::Path root;
      json at_fence;
      json mirror;
      bool snapshot_ok = true;
    };
    std::vector<Watcher> watchers;
    std::mt19937_64 rng(304);
    int mismatches = 0;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (i % 50 == 0) {
        const auto root = rtdb::Path::parse(oracle::random_path(rng, 2));
        watchers.push_back({db.subscribe(root, "tok"), root, model.get(root.segments()), nullptr});
      }
      apply(db, model, ops[i]);
      if (db.get(rtdb::Path::parse("/"), "tok") != model.get({})) ++mismatches;
    }
    if (mismatches > 0) failures.push_back(fmt("%d reads differ from the model", mismatches));
    int bad_fence = 0;
    int bad_fold = 0;
    for (auto& w : watchers) {
      bool first = true;
      while (auto e = w.sub->next(0ms)) {
        if (first && e->data != w.at_fence) ++bad_fence;
        first = false;
        rtdb::fold_event(w.mirror, *e);
      }
      if (w.mirror != model.get(w.root.segments())) ++bad_fold;
    }
    if (bad_fence + bad_fold > 0) failures.push_back(fmt("%d snapshot and %d fold mismatches", bad_fence, bad_fold));
    if (watchers.size() != 20) failures.push_back("unexpected subscriber count");
  }

  // Kill-and-recover: every acknowledged write survives, nothing beyond the
  // next in-flight write appears.
  test::TempDir dir;
  std::mt19937_64 rng(305);
  int kills = 0;
  std::string acked_at;
  for (int round = 0; round < 10; ++round) {
    const auto journal = dir.path() / fmt("kill%d.ndjson", round);
    const auto delay = std::chrono::microseconds(std::uniform_int_distribution<int>(300, 60'000)(rng));
    const int acked = write_and_kill(journal, ops, delay);
    const auto recovered = rtdb::recover(journal);
    bool ok = false;
    for (int k = acked; k <= std::min<int>(acked + 1, static_cast<int>(ops.size())) && !ok; ++k) {
      ok = recovered.tree == states[static_cast<std::size_t>(k)];
    }
    if (!ok) failures.push_back(fmt("kill after %d acked writes lost data", acked));
    ++kills;
    acked_at += (acked_at.empty() ? "" : ",") + std::to_string(acked);
  }

  // Torn tails at arbitrary byte offsets recover to some committed prefix
  // that includes every complete record.
  const auto full = dir.path() / "full.ndjson";
  {
    rtdb::Database db(db_options(full));
    oracle::LeafModel model;
    for (const auto& op : ops) apply(db, model, op);
  }
  std::ifstream in(full, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  int torn_bad = 0;
  for (int i = 0; i < 60; ++i) {
    const std::size_t cut = std::uniform_int_distribution<std::size_t>(0, bytes.size())(rng);
    const std::size_t complete =
        static_cast<std::size_t>(std::count(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut), '\n'));
    const auto file = dir.path() / "torn.ndjson";
    std::ofstream(file, std::ios::binary | std::ios::trunc) << bytes.substr(0, cut);
    try {
      if (rtdb::recover(file).tree != states[complete]) ++torn_bad;
    } catch (const std::exception&) {
      ++torn_bad;
    }
  }
  if (torn_bad > 0) failures.push_back(fmt("%d torn-tail recoveries wrong", torn_bad));

  const double secs = seconds_since(t0);
  if (secs >= 30.0) failures.push_back(fmt("took %.1f s", secs));
  std::string detail = fmt("1000 ops vs model, 20 subscribers, %d SIGKILL recoveries (acked %s), 60 torn tails, %.1f s", kills,
                           acked_at.c_str(), secs);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

// --- end to end ----------------------------------------------------------------

double source_rms(const node::SignalSourceSpec& s) {
  switch (s.kind) {
    case node::SourceKind::kSine: return s.amplitude_counts / std::sqrt(2.0);
    case node::SourceKind::kWhiteNoise: return s.amplitude_counts / std::sqrt(3.0);
    case node::SourceKind::kMixture:
      return std::sqrt(s.amplitude_counts * s.amplitude_counts / 2.0 +
                       s.noise_amplitude_counts * s.noise_amplitude_counts / 3.0);
    case node::SourceKind::kFile: break;
  }
  return std::nan("");
}

/// Records when each `node` event (by node id and seq) reaches a mapper stream client.
class StreamWatch {
 public:
  explicit StreamWatch(const net::Endpoint& mapper) : stream_(mapper, "/api/stream", 5000ms) {
    thread_ = std::jthread([this] {
      stream_.run([this](const net::SseMessage& m) {
        if (m.event != "node") return true;
        const auto j = json::parse(m.data);
        std::lock_guard lock(mutex_);
        seen_.emplace(std::make_pair(j["node_id"].get<std::string>(), j["seq"].get<std::uint64_t>()), Clock::now());
        return true;
      });
    });
  }
  ~StreamWatch() { stream_.stop(); }

  std::optional<Clock::time_point> seen(const std::string& id, std::uint64_t seq) {
    std::lock_guard lock(mutex_);
    auto it = seen_.find({id, seq});
    if (it == seen_.end()) return std::nullopt;
    return it->second;
  }

 private:
  net::SseStream stream_;
  std::mutex mutex_;
  std::map<std::pair<std::string, std::uint64_t>, Clock::time_point> seen_;
  std::jthread thread_;
};

Outcome end_to_end_demo() {
  test::TempDir dir;
  auto scenario = app::load_scenario(kDemo, no_env());
  scenario.rtdb.bind = "127.0.0.1:0";
  scenario.mapper.bind = "127.0.0.1:0";
  scenario.rtdb.journal = dir.path() / "demo.journal";
  app::ServeStack stack(scenario);
  stack.start();
  const auto db = stack.rtdb_endpoint();
  const auto mapper_ep = stack.mapper_endpoint();
  for (auto& n : scenario.nodes) n.server_url = db.host + ":" + std::to_string(db.port);

  StreamWatch watch(mapper_ep);
  std::this_thread::sleep_for(200ms);

  std::mutex ack_mutex;
  std::vector<std::tuple<std::string, std::uint64_t, Clock::time_point>> acks;
  app::FleetOptions options;
  options.on_latest_ack = [&](const node::ReadingMessage& m) {
    std::lock_guard lock(ack_mutex);
    acks.emplace_back(m.node_id, m.seq, Clock::now());
  };
  const auto duration = std::chrono::milliseconds(std::llround(*scenario.duration_s * 1000.0));
  const auto summaries = app::run_fleet(scenario.nodes, duration, std::stop_token{}, options);
  std::this_thread::sleep_for(1500ms);  // one recompute period and then some

  std::vector<std::string> failures;
  std::string detail;

  // Readings logged per node.
  std::size_t min_log = 1000, max_log = 0;
  for (const auto& n : scenario.nodes) {
    const auto log = get_json(db, net::rtdb_target("/nodes/" + n.node_id + "/log", scenario.rtdb.token));
    min_log = std::min(min_log, log.size());
    max_log = std::max(max_log, log.size());
    if (log.size() < 29 || log.size() > 31) failures.push_back(fmt("%s logged %zu", n.node_id.c_str(), log.size()));
  }
  detail += fmt("log %zu..%zu per node (30 +/- 1)", min_log, max_log);

  // Live nodes and their levels.
  const auto nodes = get_json(mapper_ep, "/api/nodes");
  const auto grid = get_json(mapper_ep, "/api/grid");
  const auto spec = app::mapper_config(scenario).grid;
  std::size_t live = 0;
  double worst_dev = 0.0;
  int grid_exact = 0;
  for (const auto& cfg : scenario.nodes) {
    const auto it = std::find_if(nodes.begin(), nodes.end(), [&](const json& j) { return j["node_id"] == cfg.node_id; });
    if (it == nodes.end()) {
      failures.push_back(cfg.node_id + " missing from /api/nodes");
      continue;
    }
    if (!(*it)["stale"].get<bool>()) ++live;
    const double latest = (*it)["latest_spl_db"].get<double>();
    const double dev = std::abs(latest - analytic_db(source_rms(cfg.source)));
    worst_dev = std::max(worst_dev, dev);
    if (dev > 0.2) failures.push_back(fmt("%s reads %.2f dB, %.3f from analytic", cfg.node_id.c_str(), latest, dev));
    const auto cell = spec.cell_of(cfg.lat, cfg.lon);
    const auto idx = static_cast<std::size_t>(cell->first * spec.cols + cell->second);
    const auto& v = grid["values"][idx];
    if (v.is_number() && v.get<double>() == latest) {
      ++grid_exact;
    } else {
      failures.push_back(cfg.node_id + " cell holds " + v.dump() + fmt(", latest %.2f", latest));
    }
  }
  if (nodes.size() != 3 || live != 3) failures.push_back(fmt("%zu nodes, %zu live", nodes.size(), live));
  detail += fmt("; %zu live, max dev %.3f dB (0.2); %d/3 node cells exact", live, worst_dev, grid_exact);

  // Research export through the CLI.
  const auto csv_path = dir.path() / "demo.csv";
  const std::string server = db.host + ":" + std::to_string(db.port);
  std::vector<const char*> argv{"sonogrid", "export", "--server", server.c_str(), "--token",
                                scenario.rtdb.token.c_str(), "--out", csv_path.c_str()};
  std::ostringstream out, err;
  const int code = app::run_cli(static_cast<int>(argv.size()), argv.data(), {}, out, err, no_env());
  std::size_t rows = 0;
  if (code == 0) {
    std::ifstream csv(csv_path);
    std::string line;
    while (std::getline(csv, line)) ++rows;
    rows = rows > 0 ? rows - 1 : 0;
  }
  if (code != 0 || rows < 87 || rows > 93) failures.push_back(fmt("export exit %d, %zu rows", code, rows));
  detail += fmt("; csv %zu rows (90 +/- 3)", rows);

  // Publish ack to mapper stream event.
  std::vector<double> latencies;
  int missing = 0;
  for (const auto& [id, seq, at] : acks) {
    const auto seen = watch.seen(id, seq);
    if (!seen) {
      ++missing;
      continue;
    }
    latencies.push_back(std::max(0.0, std::chrono::duration<double, std::milli>(*seen - at).count()));
  }
  std::sort(latencies.begin(), latencies.end());
  const double p50 = latencies.empty() ? 0.0 : latencies[latencies.size() / 2];
  const double worst = latencies.empty() ? 0.0 : latencies.back();
  if (missing > 0 || latencies.empty() || worst >= 500.0) {
    failures.push_back(fmt("%d acks never reached the stream", missing));
  }
  detail += fmt("; ack->stream p50 %.1f ms, max %.1f ms over %zu, events seen before the ack count as 0 (limit 500)", p50, worst, latencies.size());

  for (const auto& s : summaries) {
    if (s.dropped > 0 || s.pending > 0 || !s.last_error.empty()) failures.push_back(app::format_summary(s));
  }
  stack.stop();
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

// --- interpolation -------------------------------------------------------------

mapper::NodeState make_node(std::string id, double lat, double lon, double db) {
  mapper::NodeState n;
  n.node_id = std::move(id);
  n.lat = lat;
  n.lon = lon;
  n.latest_spl_db = db;
  return n;
}

Outcome idw_properties() {
  std::vector<std::string> failures;
  // Symmetric midpoint, as a point query and as a one-cell grid centred on it.
  const double off = 0.00390625;
  std::vector<mapper::NodeState> pair{make_node("a", 45.0, 7.5 - off, 60.0), make_node("b", 45.0, 7.5 + off, 80.0)};
  const auto mid = mapper::idw_at(pair, 45.0, 7.5, {});
  const auto one = mapper::idw_interpolate(pair, mapper::GridSpec{{44.5, 45.5, 7.0, 8.0}, 1, 1}, {}, 0);
  if (mid != 70.0 || one.at(0, 0) != 70.0) failures.push_back("midpoint is not exactly 70");

  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> db(20.0, 120.0), span(0.002, 0.03), base_lat(-60.0, 60.0),
      base_lon(-170.0, 170.0);
  std::uniform_int_distribution<int> count(1, 10), side(4, 24);
  int exact_checks = 0, exact_bad = 0, bounded_checks = 0, bounded_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double lat0 = base_lat(rng), lon0 = base_lon(rng), dl = span(rng), dn = span(rng);
    mapper::GridSpec spec{{lat0, lat0 + dl, lon0, lon0 + dn}, side(rng), side(rng)};
    std::vector<mapper::NodeState> nodes;
    const int n = count(rng);
    std::vector<std::pair<int, int>> pinned;
    for (int i = 0; i < n; ++i) {
      const std::string id = "n" + std::to_string(i);
      if (i % 2 == 0) {
        // On a cell centre, so exactness is observable on the grid.
        const int r = std::uniform_int_distribution<int>(0, spec.rows - 1)(rng);
        const int c = std::uniform_int_distribution<int>(0, spec.cols - 1)(rng);
        if (std::find(pinned.begin(), pinned.end(), std::make_pair(r, c)) != pinned.end()) continue;
        pinned.emplace_back(r, c);
        const auto [la, lo] = spec.cell_center(r, c);
        nodes.push_back(make_node(id, la, lo, db(rng)));
      } else {
        nodes.push_back(make_node(id, lat0 + dl * std::generate_canonical<double, 53>(rng),
                                  lon0 + dn * std::generate_canonical<double, 53>(rng), db(rng)));
      }
    }
    mapper::IdwParams params;
    params.r_max_m = std::uniform_real_distribution<double>(200.0, 3000.0)(rng);
    const auto grid = mapper::idw_interpolate(nodes, spec, params, 0);
    for (const auto& nd : nodes) {
      const auto cell = spec.cell_of(nd.lat, nd.lon);
      const auto [la, lo] = spec.cell_center(cell->first, cell->second);
      if (la != nd.lat || lo != nd.lon) continue;
      ++exact_checks;
      if (grid.at(cell->first, cell->second) != nd.latest_spl_db) ++exact_bad;
    }
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        const auto& v = grid.at(r, c);
        if (!v) continue;
        const auto [la, lo] = spec.cell_center(r, c);
        double lo_v = 1e300, hi_v = -1e300;
        for (const auto& nd : nodes) {
          if (vincenty_m(la, lo, nd.lat, nd.lon) <= params.r_max_m + 1e-6) {
            lo_v = std::min(lo_v, nd.latest_spl_db);
            hi_v = std::max(hi_v, nd.latest_spl_db);
          }
        }
        ++bounded_checks;
        if (*v < lo_v || *v > hi_v) ++bounded_bad;
      }
    }
  }
  if (exact_bad > 0) failures.push_back(fmt("%d inexact node cells", exact_bad));
  if (bounded_bad > 0) failures.push_back(fmt("%d cells outside their contributors' range", bounded_bad));
  std::string detail = fmt("midpoint %.17g; exact at %d/%d node cells; bounded at %d/%d cells over 1000 configs",
                           mid.value_or(-1.0), exact_checks - exact_bad, exact_checks, bounded_checks - bounded_bad,
                           bounded_checks);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

// --- staleness -----------------------------------------------------------------

Outcome staleness() {
  const std::string yaml = R"(
rtdb: {bind: '127.0.0.1:0', token: tok}
mapper:
  bind: 127.0.0.1:0
  bbox: {lat_min: 45.0600, lat_max: 45.0728, lon_min: 7.6600, lon_max: 7.6856}
  grid: {rows: 128, cols: 128}
nodes:
  - {id: steady, lat: 45.06635, lon: 7.6729, source: {kind: sine, amplitude: 100}}
  - {id: flaky, lat: 45.06875, lon: 7.6661, source: {kind: sine, amplitude: 20}}
)";
  test::TempDir dir;
  auto scenario = app::parse_scenario(yaml, dir.path(), no_env());
  app::ServeStack stack(scenario);
  stack.start();
  const auto db = stack.rtdb_endpoint();
  const auto mapper_ep = stack.mapper_endpoint();
  for (auto& n : scenario.nodes) n.server_url = db.host + ":" + std::to_string(db.port);
  const auto spec = app::mapper_config(scenario).grid;
  const auto flaky_cell = *spec.cell_of(scenario.nodes[1].lat, scenario.nodes[1].lon);
  const auto cell_index = static_cast<std::size_t>(flaky_cell.first * spec.cols + flaky_cell.second);

  std::atomic<std::int64_t> flaky_last_ts{0};
  std::atomic<std::uint64_t> flaky_acks{0};
  app::FleetOptions options;
  options.on_latest_ack = [&](const node::ReadingMessage& m) {
    if (m.node_id == "flaky") {
      flaky_last_ts = m.ts;
      ++flaky_acks;
    }
  };
  std::stop_source steady_stop, flaky_stop;
  std::jthread steady([&] { app::run_fleet({scenario.nodes[0]}, std::nullopt, steady_stop.get_token(), options); });
  auto flaky = std::make_unique<std::jthread>(
      [&] { app::run_fleet({scenario.nodes[1]}, std::nullopt, flaky_stop.get_token(), options); });

  struct View {
    bool flaky_stale = false;
    std::size_t live = 0;
    json cell;
    double steady_db = 0.0;
    double flaky_db = 0.0;
  };
  auto view = [&] {
    View v;
    const auto nodes = get_json(mapper_ep, "/api/nodes");
    for (const auto& n : nodes) {
      if (n["node_id"] == "flaky") {
        v.flaky_stale = n["stale"].get<bool>();
        v.flaky_db = n["latest_spl_db"].get<double>();
      } else {
        v.steady_db = n["latest_spl_db"].get<double>();
      }
    }
    const auto grid = get_json(mapper_ep, "/api/grid");
    v.live = grid["live_nodes"].get<std::size_t>();
    v.cell = grid["values"][cell_index];
    return v;
  };
  auto wait_for = [&](auto pred, std::chrono::milliseconds limit) -> std::optional<View> {
    const auto end = Clock::now() + limit;
    while (Clock::now() < end) {
      auto v = view();
      if (pred(v)) return v;
      std::this_thread::sleep_for(50ms);
    }
    return std::nullopt;
  };

  std::vector<std::string> failures;
  std::string detail;
  const auto both = wait_for([](const View& v) { return v.live == 2 && !v.flaky_stale; }, 6000ms);
  if (!both) failures.push_back("both nodes never became live");

  // Silence the flaky node and watch the moment it drops out.
  flaky_stop.request_stop();
  flaky.reset();
  const std::int64_t last_seen = flaky_last_ts.load();
  bool early = false;
  std::optional<std::int64_t> excluded_at;
  while (wall_ms() < last_seen + 14'000) {
    const auto v = view();
    const std::int64_t now = wall_ms();
    const bool out = v.flaky_stale && v.live == 1 && v.cell.is_number() && v.cell.get<double>() == v.steady_db;
    if (out && !excluded_at) excluded_at = now;
    if ((v.flaky_stale || v.live != 2) && now < last_seen + 10'000) early = true;
    if (excluded_at) break;
    std::this_thread::sleep_for(50ms);
  }
  if (early) failures.push_back("flagged stale before 10 s of silence");
  if (!excluded_at) {
    failures.push_back("still in the grid 14 s after its last reading");
  } else {
    const double after = static_cast<double>(*excluded_at - last_seen) / 1000.0;
    detail += fmt("excluded and flagged stale %.2f s after its last reading", after);
    if (after <= 10.0 || after > 11.5) failures.push_back("exclusion outside (10 s, 11.5 s]");
  }

  // Bring it back; it re-enters with its new reading.
  const auto acks_before = flaky_acks.load();
  flaky_stop = std::stop_source();
  const auto restart = Clock::now();
  flaky = std::make_unique<std::jthread>(
      [&] { app::run_fleet({scenario.nodes[1]}, std::nullopt, flaky_stop.get_token(), options); });
  const auto back = wait_for(
      [&](const View& v) {
        return flaky_acks.load() > acks_before && !v.flaky_stale && v.live == 2 && v.cell.is_number() &&
               v.cell.get<double>() == v.flaky_db;
      },
      3000ms);
  if (!back) {
    const auto v = view();
    failures.push_back(fmt("did not re-enter within 3 s of restarting (acks %llu->%llu, stale %d, live %zu, cell %s, "
                           "node %.2f)",
                           static_cast<unsigned long long>(acks_before),
                           static_cast<unsigned long long>(flaky_acks.load()), v.flaky_stale, v.live,
                           v.cell.dump().c_str(), v.flaky_db));
  } else {
    detail += fmt("; re-entered %.2f s after restart", seconds_since(restart));
  }
  flaky_stop.request_stop();
  steady_stop.request_stop();
  flaky.reset();
  steady = std::jthread();
  stack.stop();
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

struct Criterion {
  const char* name;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {"fht-correctness", fht_correctness}, {"parseval", parseval},
      {"sine-spl", sine_spl},               {"a-weighting", a_weighting},
      {"rtdb-semantics", rtdb_semantics},   {"end-to-end-demo", end_to_end_demo},
      {"idw-properties", idw_properties},   {"staleness", staleness},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

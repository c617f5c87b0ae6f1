// Command-line front end: run, replay, validate and simulate.

#include <atomic>
#include <csignal>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "cosim/harness/experiment.hpp"
#include "cosim/harness/gateway.hpp"
#include "cosim/harness/link.hpp"
#include "cosim/harness/replay.hpp"
#include "cosim/harness/scenario.hpp"

namespace {

using namespace cosim;
using namespace cosim::harness;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitCollision = 2;

struct RunArgs {
  std::string scenario;
  std::string mode = "in_process";
  std::string sim_host = "127.0.0.1";
  int cmd_port = net::kDefaultCommandPort;
  int stream_port = net::kDefaultStreamPort;
  int gateway_port = kDefaultGatewayPort;
  std::string log_dir = "logs";
  std::optional<double> duration;
  bool headless = false;
  double drop_rate = 0.0;
  std::uint64_t drop_seed = 1;
};

Gateway::Handler experiment_handler(Experiment& exp) {
  return [&exp](const protocol::Message& m) -> std::optional<std::string> {
    if (auto* d = std::get_if<protocol::ManualDrive>(&m); d && !exp.has_vehicle(d->vehicle_id)) {
      return "unknown vehicle " + std::to_string(d->vehicle_id);
    }
    if (auto* r = std::get_if<protocol::ReleaseManual>(&m); r && !exp.has_vehicle(r->vehicle_id)) {
      return "unknown vehicle " + std::to_string(r->vehicle_id);
    }
    if (std::holds_alternative<protocol::ReplayCommand>(m)) return "replay is served by the replay subcommand";
    if (!exp.post(m)) return "command queue full";
    return std::nullopt;
  };
}

void print_summary(const RunSummary& s) {
  std::cout << "ticks: " << s.ticks << "\nclock: " << format_number(s.clock) << " s\nrecords: " << s.records
            << "\nall vehicles complete: " << (s.all_complete ? "yes" : "no") << '\n';
  if (!s.log_file.empty()) std::cout << "log: " << s.log_file << '\n';
}

int cmd_run(const RunArgs& a) {
  ScenarioConfig cfg = load_scenario(a.scenario);
  if (a.duration) {
    if (*a.duration < 0.0) throw InvariantViolation("--duration", "must be >= 0");
    cfg.duration = *a.duration;
  }

  std::unique_ptr<Simulator> sim;
  std::unique_ptr<SimulatorLink> base;
  if (a.mode == "in_process") {
    sim = std::make_unique<Simulator>(cfg.paths, cfg.physics_dt);
    base = std::make_unique<InProcessLink>(*sim);
  } else if (a.mode == "networked") {
    NetworkLinkOptions opts;
    opts.host = a.sim_host;
    opts.command_port = a.cmd_port;
    opts.stream_port = a.stream_port;
    base = std::make_unique<NetworkLink>(opts);
  } else {
    throw InvariantViolation("--mode", "expected in_process or networked");
  }
  std::unique_ptr<LossyLink> lossy;
  SimulatorLink* link = base.get();
  if (a.drop_rate > 0.0) {
    lossy = std::make_unique<LossyLink>(*base, a.drop_rate, a.drop_seed);
    link = lossy.get();
  }

  Experiment exp(cfg, *link, a.log_dir);
  if (a.headless) {
    const RunSummary s = exp.run();
    print_summary(s);
    return kExitOk;
  }

  Gateway gateway(a.gateway_port, experiment_handler(exp), [&exp] { return exp.status(); });
  std::cout << "gateway listening on port " << gateway.port() << "; waiting for start" << std::endl;
  RunOptions opts;
  opts.wait_for_start = true;
  opts.realtime_factor = 1.0;
  opts.stop_requested = [] { return g_interrupted.load(); };
  while (!g_interrupted) {
    const RunSummary s = exp.run(opts);
    if (exp.state() == RunState::complete) print_summary(s);
  }
  return kExitOk;
}

int cmd_replay(const std::string& file, double speed, std::optional<int> gateway_port, int stream_port) {
  const auto records = read_log_file(file);
  net::StreamPublisher publisher(stream_port);
  std::unique_ptr<Gateway> gateway;
  std::mutex frame_mutex;
  protocol::StateFrame latest;
  latest.state = "idle";
  if (gateway_port) {
    gateway = std::make_unique<Gateway>(
        *gateway_port, [](const protocol::Message&) -> std::optional<std::string> { return "read-only replay"; },
        [&] {
          std::lock_guard lock(frame_mutex);
          return latest;
        });
  }
  const std::size_t groups = replay(
      records, speed,
      [&](const ReplayGroup& g) {
        publisher.publish_tick(g.transforms);
        std::lock_guard lock(frame_mutex);
        latest = g.state;
      },
      [] { return g_interrupted.load(); });
  publisher.flush(std::chrono::milliseconds(500));
  std::cout << "replayed " << groups << " ticks from " << file << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& file) {
  const ScenarioConfig cfg = load_scenario(file);
  const auto placements = spawn_vehicles(cfg);
  std::cout << "ok: " << cfg.vehicles.size() << " vehicles, " << cfg.paths.size() << " paths, "
            << cfg.yield_rules.size() << " yield rules\n";
  for (const auto& p : placements) {
    std::cout << "  vehicle " << p.vehicle_id << " on " << p.path_id << " at p=" << format_number(p.p) << '\n';
  }
  return kExitOk;
}

int cmd_simulate(const std::string& file, const std::string& host, int cmd_port, int stream_port) {
  const ScenarioConfig cfg = load_scenario(file);
  SimulatorServer server(cfg.paths, cfg.physics_dt, cmd_port, stream_port, host);
  std::cout << "simulator: commands on udp " << server.command_port() << ", stream on tcp " << server.stream_port()
            << std::endl;
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"Mixed-traffic co-simulation harness"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("scenario", run_args.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", run_args.mode, "in_process or networked")
      ->check(CLI::IsMember({"in_process", "networked"}));
  run->add_option("--sim-host", run_args.sim_host, "Simulator host (networked mode)");
  run->add_option("--cmd-port", run_args.cmd_port, "Simulator command port");
  run->add_option("--stream-port", run_args.stream_port, "Simulator stream port");
  run->add_option("--gateway-port", run_args.gateway_port, "Operator console port");
  run->add_option("--log-dir", run_args.log_dir, "Directory for log files");
  run->add_option("--duration", run_args.duration, "Override the scenario duration (s)");
  run->add_flag("--headless", run_args.headless, "Run immediately without the console gateway");
  run->add_option("--drop-rate", run_args.drop_rate, "Fraction of waypoint commands to drop")
      ->check(CLI::Range(0.0, 1.0));
  run->add_option("--drop-seed", run_args.drop_seed, "Seed for the drop pattern");

  std::string replay_file;
  double replay_speed = 1.0;
  std::optional<int> replay_gateway;
  int replay_stream = net::kDefaultStreamPort;
  auto* rep = app.add_subcommand("replay", "Replay a log file");
  rep->add_option("log", replay_file, "Log file")->required()->check(CLI::ExistingFile);
  rep->add_option("--speed", replay_speed, "Playback speed factor")->check(CLI::PositiveNumber);
  rep->add_option("--gateway-port", replay_gateway, "Operator console port");
  rep->add_option("--stream-port", replay_stream, "Pose stream port");

  std::string validate_file;
  auto* val = app.add_subcommand("validate", "Check a scenario file");
  val->add_option("scenario", validate_file, "Scenario file")->required();

  std::string sim_file, sim_host = "127.0.0.1";
  int sim_cmd = net::kDefaultCommandPort, sim_stream = net::kDefaultStreamPort;
  auto* sim = app.add_subcommand("simulate", "Host the simulator side for networked runs");
  sim->add_option("scenario", sim_file, "Scenario file (paths and timing)")->required()->check(CLI::ExistingFile);
  sim->add_option("--host", sim_host, "Bind address");
  sim->add_option("--cmd-port", sim_cmd, "Command port");
  sim->add_option("--stream-port", sim_stream, "Stream port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*rep) return cmd_replay(replay_file, replay_speed, replay_gateway, replay_stream);
    if (*val) return cmd_validate(validate_file);
    if (*sim) return cmd_simulate(sim_file, sim_host, sim_cmd, sim_stream);
  } catch (const CollisionDetected& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCollision;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

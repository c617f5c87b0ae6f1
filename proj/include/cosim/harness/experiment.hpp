#pragma once

// Mainframe orchestration: experiment clock, per-vehicle planners, waypoint
// emission, logging and the collision monitor. One thread owns all of this;
// other threads talk to it through post() and status().

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "cosim/behavior_idm.hpp"
#include "cosim/harness/link.hpp"
#include "cosim/harness/log.hpp"
#include "cosim/harness/scenario.hpp"
#include "cosim/harness/spawn.hpp"
#include "cosim/net/bounded_queue.hpp"

namespace cosim::harness {

enum class RunState { idle, running, paused, complete };
enum class VehicleStatus { queued, driving, yielding, complete };

inline const char* to_string(RunState s) {
  switch (s) {
    case RunState::idle: return "idle";
    case RunState::running: return "running";
    case RunState::paused: return "paused";
    case RunState::complete: return "complete";
  }
  return "idle";
}

inline const char* to_string(VehicleStatus s) {
  switch (s) {
    case VehicleStatus::queued: return "queued";
    case VehicleStatus::driving: return "driving";
    case VehicleStatus::yielding: return "yielding";
    case VehicleStatus::complete: return "complete";
  }
  return "queued";
}

class CollisionDetected : public Error {
 public:
  CollisionDetected(int follower, std::optional<int> leader, double t, double gap)
      : Error("collision at t=" + format_number(t) + ": vehicle " + std::to_string(follower) + " behind " +
              (leader ? "vehicle " + std::to_string(*leader) : std::string("the yield line")) +
              ", gap " + format_number(gap) + " m"),
        follower_(follower),
        leader_(leader),
        t_(t),
        gap_(gap) {}
  int follower() const { return follower_; }
  std::optional<int> leader() const { return leader_; }
  double t() const { return t_; }
  double gap() const { return gap_; }

 private:
  int follower_;
  std::optional<int> leader_;
  double t_;
  double gap_;
};

struct RunSummary {
  bool all_complete = false;
  std::int64_t ticks = 0;
  double clock = 0.0;
  std::string log_file;
  std::size_t records = 0;
  std::map<int, std::int64_t> completion_tick;  // planner tick at which each vehicle finished
};

struct RunOptions {
  bool wait_for_start = false;   // stay idle until a start command arrives
  double realtime_factor = 0.0;  // 0 runs as fast as possible; 1 paces to wall clock
  std::function<bool()> stop_requested;
};

class Experiment {
 public:
  /// `log_dir` empty keeps records in memory only.
  Experiment(ScenarioConfig config, SimulatorLink& link, std::string log_dir = {})
      : config_(std::move(config)), link_(link), log_dir_(std::move(log_dir)), merges_(config_.merge_map()) {
    steps_per_tick_ = config_.physics_steps_per_tick();
    max_ticks_ = static_cast<std::int64_t>(std::floor(config_.duration / config_.planner_dt + 1e-9));
    build_vehicles();
    publish_status();
  }

  const ScenarioConfig& config() const { return config_; }
  const std::vector<LogRecord>& records() const { return records_; }
  const std::string& log_file() const { return log_file_; }
  std::int64_t tick_index() const { return tick_; }
  RunState state() const { return state_; }
  int run_number() const { return run_number_; }

  /// Thread-safe: queues an operator command for the next tick boundary.
  bool post(protocol::Message command) { return commands_.push(std::move(command)); }

  /// Thread-safe snapshot for the console.
  protocol::StateFrame status() const {
    std::lock_guard lock(status_mutex_);
    return status_;
  }

  bool has_vehicle(std::int64_t id) const {
    for (const auto& v : vehicles_) {
      if (v.spec.id == id) return true;
    }
    return false;
  }

  /// Restores the stored initial conditions: clock zeroed, simulator
  /// respawned, a fresh log file opened. Safe to call in any state.
  void reset() {
    finish_log();
    tick_ = 0;
    records_.clear();
    completion_tick_.clear();
    for (auto& v : vehicles_) {
      v.plan.p = v.initial_p;
      v.plan.v = v.spec.v;
      v.status = VehicleStatus::queued;
      v.manual.reset();
      v.active = true;
      v.ticks_logged = 0;
      v.measured = initial_record(v);
      v.s_hint = v.path->from_aligned(v.initial_p);
    }
    link_.send(protocol::ResetCommand{});
    for (const auto& v : vehicles_) {
      protocol::InitMessage init;
      init.vehicle_id = v.spec.id;
      init.controller_params =
          pack_init_params(v.path_index, v.params, v.gains.stanley, v.gains.longitudinal);
      init.initial_state = {v.measured.x, v.measured.y, v.measured.yaw, v.spec.v};
      init.appearance = v.spec.appearance;
      link_.send(init);
    }
    ++run_number_;
    if (!log_dir_.empty()) {
      std::filesystem::create_directories(log_dir_);
      char name[32];
      std::snprintf(name, sizeof(name), "run_%03d.csv", run_number_);
      log_file_ = (std::filesystem::path(log_dir_) / name).string();
      writer_ = std::make_unique<LogWriter>(log_file_);
    }
    prepared_ = true;
    set_state(RunState::idle);
  }

  /// Same as reset(); the name used by operators.
  void repeat() { reset(); }

  /// Runs until every vehicle completes, the duration elapses, or a stop is
  /// requested. Throws CollisionDetected after flushing the log.
  RunSummary run(const RunOptions& options = {}) {
    if (!prepared_ || state_ == RunState::complete) reset();
    auto_start_ = !options.wait_for_start;
    set_state(options.wait_for_start ? RunState::idle : RunState::running);
    auto wall_start = std::chrono::steady_clock::now();
    std::int64_t paced_from = tick_;
    for (;;) {
      if (options.stop_requested && options.stop_requested()) break;
      const RunState before = state_;
      drain_commands();
      if (state_ == RunState::running && before != RunState::running) {
        wall_start = std::chrono::steady_clock::now();
        paced_from = tick_;
      }
      if (state_ == RunState::complete) break;
      if (state_ != RunState::running) {
        if (auto cmd = commands_.pop(std::chrono::milliseconds(20))) handle(*cmd);
        continue;
      }
      if (finished()) {
        complete();
        break;
      }
      tick();
      if (options.realtime_factor > 0.0) {
        const double elapsed = static_cast<double>(tick_ - paced_from) * config_.planner_dt / options.realtime_factor;
        std::this_thread::sleep_until(wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                       std::chrono::duration<double>(elapsed)));
      }
    }
    return summary();
  }

  /// Advances exactly one planner tick.
  void tick() {
    const double t0 = clock();
    const double t1 = static_cast<double>(tick_ + 1) * config_.planner_dt;

    // Snapshot: planned states for planner-driven vehicles, measured states
    // for manually driven ones.
    std::vector<PlannerState> snapshot;
    std::vector<VehicleRuntime*> actives;
    for (auto& v : vehicles_) {
      if (!v.active) continue;
      if (v.manual) {
        v.plan.p = v.measured.p;
        v.plan.v = v.measured.v;
      }
      snapshot.push_back(v.plan);
      actives.push_back(&v);
    }
    std::vector<VirtualVehicle> virtuals;
    for (const auto& rule : config_.yield_rules) virtuals.push_back(update_yield(rule, snapshot));

    std::vector<PlannerState> next(snapshot);
    for (std::size_t i = 0; i < actives.size(); ++i) {
      VehicleRuntime& v = *actives[i];
      if (v.manual) continue;
      const auto leader = find_predecessor(snapshot[i], snapshot, virtuals, merges_);
      const double gap = leader ? leader->gap : std::numeric_limits<double>::infinity();
      if (!(gap > 0.0)) abort_with(CollisionDetected(v.spec.id, leader->vehicle_id, t0, gap));
      const double u = idm_accel(snapshot[i].v, gap, leader ? leader->dv : 0.0, v.idm);
      next[i] = plan_step(snapshot[i], u, config_.planner_dt, v.idm);
      v.status = (leader && !leader->vehicle_id) ? VehicleStatus::yielding : VehicleStatus::driving;
    }

    // Ordered commit, then waypoints or completion.
    for (std::size_t i = 0; i < actives.size(); ++i) {
      VehicleRuntime& v = *actives[i];
      if (v.manual) {
        link_.send(*v.manual);
        continue;
      }
      v.plan = next[i];
      if (plan_complete(v.plan, *v.path)) {
        retire(v);
        continue;
      }
      const Waypoint wp = emit_waypoint(v.plan, *v.path, t1);
      link_.send(protocol::WaypointCommand{v.spec.id, wp.t_stamp, wp.position.x, wp.position.y, wp.yaw, wp.speed});
    }

    const TickReports reports = link_.step(tick_, steps_per_tick_);
    ++tick_;

    for (auto& v : vehicles_) {
      if (!v.active) continue;
      const protocol::TransformReport* tr = nullptr;
      const protocol::Telemetry* tel = nullptr;
      for (const auto& r : reports.transforms) {
        if (r.vehicle_id == v.spec.id) tr = &r;
      }
      for (const auto& r : reports.telemetry) {
        if (r.vehicle_id == v.spec.id) tel = &r;
      }
      if (!tr || !tel) throw SimulatorUnreachable("no report for vehicle " + std::to_string(v.spec.id));
      LogRecord rec;
      rec.t = t1;
      rec.vehicle_id = v.spec.id;
      rec.x = tr->position.x;
      rec.y = tr->position.y;
      rec.yaw = protocol::quaternion_to_yaw(tr->rotation);
      const PathProjection proj = v.path->project({rec.x, rec.y}, v.s_hint);
      v.s_hint = proj.s;
      rec.p = v.path->to_aligned(proj.s);
      rec.v = tel->v;
      rec.u_d = tel->u_d;
      rec.steer = tel->steer;
      rec.gas = tel->gas;
      rec.brake = tel->brake;
      rec.handbrake = static_cast<int>(tel->handbrake);
      v.measured = rec;
      ++v.ticks_logged;
      records_.push_back(rec);
      if (writer_) writer_->append(rec);
      if (v.manual && proj.s >= v.path->length()) retire(v);
    }

    monitor_collisions(t1);
    publish_status();
  }

  bool finished() const {
    if (tick_ >= max_ticks_) return true;
    for (const auto& v : vehicles_) {
      if (v.active) return false;
    }
    return true;
  }

  RunSummary summary() const {
    RunSummary s;
    s.all_complete = true;
    for (const auto& v : vehicles_) s.all_complete = s.all_complete && v.status == VehicleStatus::complete;
    s.ticks = tick_;
    s.clock = clock();
    s.log_file = log_file_;
    s.records = records_.size();
    s.completion_tick = completion_tick_;
    return s;
  }

  double clock() const { return static_cast<double>(tick_) * config_.planner_dt; }

 private:
  struct VehicleRuntime {
    VehicleSpec spec;
    std::size_t path_index = 0;
    const Path* path = nullptr;
    VehicleParams params;
    IDMParams idm;
    ControllerGains gains;
    double initial_p = 0.0;
    PlannerState plan;
    VehicleStatus status = VehicleStatus::queued;
    std::optional<protocol::ManualDrive> manual;
    bool active = true;
    std::size_t ticks_logged = 0;
    LogRecord measured;
    double s_hint = 0.0;
  };

  void build_vehicles() {
    const auto placements = spawn_vehicles(config_);
    for (std::size_t i = 0; i < config_.vehicles.size(); ++i) {
      const VehicleSpec& spec = config_.vehicles[i];
      VehicleRuntime v;
      v.spec = spec;
      v.path_index = config_.path_index(spec.path_id);
      v.path = &config_.paths[v.path_index];
      v.params = config_.vehicle_params.at(spec.vehicle_params);
      v.idm = config_.idm_params.at(spec.idm_params);
      v.gains = config_.controller_gains.at(spec.controller_gains);
      v.initial_p = placements[i].p;
      v.plan = PlannerState{spec.id, spec.path_id, v.initial_p, spec.v, v.params.length};
      v.measured = initial_record(v);
      vehicles_.push_back(std::move(v));
    }
    std::sort(vehicles_.begin(), vehicles_.end(),
              [](const VehicleRuntime& a, const VehicleRuntime& b) { return a.spec.id < b.spec.id; });
  }

  LogRecord initial_record(const VehicleRuntime& v) const {
    const Pose2 pose = v.path->pose_at(v.path->from_aligned(v.initial_p));
    LogRecord r;
    r.vehicle_id = v.spec.id;
    r.p = v.initial_p;
    r.x = pose.x;
    r.y = pose.y;
    r.yaw = pose.yaw;
    r.v = v.spec.v;
    return r;
  }

  void retire(VehicleRuntime& v) {
    v.active = false;
    v.status = VehicleStatus::complete;
    v.manual.reset();
    completion_tick_[v.spec.id] = tick_;
    link_.send(protocol::DespawnCommand{v.spec.id});
  }

  void monitor_collisions(double t) {
    std::vector<const VehicleRuntime*> live;
    for (const auto& v : vehicles_) {
      if (v.active) live.push_back(&v);
    }
    for (const auto* a : live) {
      for (const auto* b : live) {
        if (a == b || a->measured.p > b->measured.p) continue;
        if (a->measured.p == b->measured.p && a->spec.id < b->spec.id) continue;
        // b is at or ahead of a.
        if (a->spec.path_id != b->spec.path_id) {
          const auto merge = merges_.shared_from(a->spec.path_id, b->spec.path_id);
          if (!merge || a->measured.p < *merge || b->measured.p < *merge) continue;
        }
        const double gap = b->measured.p - b->params.length - a->measured.p;
        if (!(gap > 0.0)) abort_with(CollisionDetected(a->spec.id, b->spec.id, t, gap));
      }
    }
  }

  [[noreturn]] void abort_with(const CollisionDetected& e) {
    finish_log();
    set_state(RunState::complete);
    throw e;
  }

  void complete() {
    std::size_t expected = 0;
    for (const auto& v : vehicles_) expected += v.ticks_logged;
    if (expected != records_.size()) throw Error("log reconciliation failed: record count mismatch");
    finish_log();
    set_state(RunState::complete);
  }

  void finish_log() {
    if (writer_) writer_->flush();
    writer_.reset();
  }

  void drain_commands() {
    for (auto& cmd : commands_.drain()) handle(cmd);
  }

  void handle(const protocol::Message& cmd) {
    if (std::holds_alternative<protocol::StartCommand>(cmd)) {
      if (state_ == RunState::idle || state_ == RunState::paused) set_state(RunState::running);
    } else if (std::holds_alternative<protocol::PauseCommand>(cmd)) {
      if (state_ == RunState::running) set_state(RunState::paused);
    } else if (std::holds_alternative<protocol::ResetCommand>(cmd)) {
      reset();
      if (auto_start_) set_state(RunState::running);
    } else if (auto* m = std::get_if<protocol::ManualDrive>(&cmd)) {
      for (auto& v : vehicles_) {
        if (v.spec.id == m->vehicle_id && v.active) v.manual = *m;
      }
    } else if (auto* r = std::get_if<protocol::ReleaseManual>(&cmd)) {
      for (auto& v : vehicles_) {
        if (v.spec.id != r->vehicle_id || !v.manual) continue;
        v.manual.reset();
        v.plan.p = v.measured.p;
        v.plan.v = v.measured.v;
        link_.send(protocol::ReleaseManual{v.spec.id});
      }
    }
    publish_status();
  }

  void set_state(RunState s) {
    state_ = s;
    publish_status();
  }

  void publish_status() {
    protocol::StateFrame frame;
    frame.state = to_string(state_);
    frame.clock = clock();
    for (const auto& v : vehicles_) {
      const LogRecord& m = v.measured;
      frame.vehicles.push_back({v.spec.id, to_string(v.status), m.t, m.p, m.x, m.y, m.yaw, m.v, m.u_d, m.steer,
                                m.gas, m.brake, m.handbrake});
    }
    std::lock_guard lock(status_mutex_);
    status_ = std::move(frame);
  }

  ScenarioConfig config_;
  SimulatorLink& link_;
  std::string log_dir_;
  MergeMap merges_;
  int steps_per_tick_ = 1;
  std::int64_t max_ticks_ = 0;
  std::vector<VehicleRuntime> vehicles_;
  std::vector<LogRecord> records_;
  std::map<int, std::int64_t> completion_tick_;
  std::int64_t tick_ = 0;
  RunState state_ = RunState::idle;
  bool prepared_ = false;
  bool auto_start_ = true;
  int run_number_ = 0;
  std::string log_file_;
  std::unique_ptr<LogWriter> writer_;
  net::BoundedQueue<protocol::Message> commands_;
  mutable std::mutex status_mutex_;
  protocol::StateFrame status_;
};

}  // namespace cosim::harness

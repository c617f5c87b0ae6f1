#pragma once

// Simulator side of the bridge: owns the physical vehicles and their
// tracking controllers, consumes bridge commands and produces pose and
// telemetry reports once per physics tick.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "cosim/bridge_protocol.hpp"
#include "cosim/controller_stack.hpp"
#include "cosim/road_network.hpp"
#include "cosim/vehicle_dynamics.hpp"

namespace cosim::harness {

/// Reports produced by one physics tick.
struct TickReports {
  std::vector<protocol::TransformReport> transforms;
  std::vector<protocol::Telemetry> telemetry;
};

struct SimVehicle {
  std::int64_t id = 0;
  std::size_t path_index = 0;
  VehicleParams params;
  TrackingController controller{StanleyGains{}, LongitudinalGains{}};
  VehicleState state;
  double s_hint = 0.0;
  std::optional<protocol::WaypointCommand> waypoint;
  double waypoint_s = 0.0;
  double waypoint_accel = 0.0;
  std::optional<protocol::ManualDrive> manual;
  TrackingOutput last;
  std::string appearance;
};

class Simulator {
 public:
  explicit Simulator(std::vector<Path> paths, double physics_dt = kDefaultPhysicsDt)
      : paths_(std::move(paths)), dt_(physics_dt) {}

  double physics_dt() const { return dt_; }
  std::int64_t ticks() const { return ticks_; }
  double now() const { return static_cast<double>(ticks_) * dt_; }
  const std::map<std::int64_t, SimVehicle>& vehicles() const { return vehicles_; }

  /// Applies one command. Messages the simulator does not consume are ignored.
  void apply(const protocol::Message& message) {
    std::visit([this](const auto& m) { handle(m); }, message);
  }

  /// Advances every vehicle by one physics tick.
  TickReports step() {
    const double t_next = static_cast<double>(ticks_ + 1) * dt_;
    TickReports out;
    for (auto& [id, veh] : vehicles_) {
      const Path& path = paths_[veh.path_index];
      const PathProjection proj = path.project(veh.state.pose.position(), veh.s_hint);
      if (veh.manual) {
        veh.last = TrackingController::manual(veh.manual->steer, veh.manual->throttle, veh.params.max_steer);
      } else {
        double ref_s = proj.s;
        double ref_v = 0.0;
        if (veh.waypoint) {
          const auto [s, v] = reference_at(veh, t_next);
          ref_s = s;
          ref_v = v;
        }
        veh.last = veh.controller.update(veh.state, proj, ref_s, ref_v, veh.params.max_steer, dt_);
      }
      veh.state = cosim::step(veh.state, veh.last.input, veh.params, dt_);
      veh.state.t = t_next;
      veh.s_hint = path.project(veh.state.pose.position(), proj.s).s;

      protocol::TransformReport tr;
      tr.vehicle_id = id;
      tr.t_stamp = t_next;
      tr.position = {veh.state.pose.x, veh.state.pose.y, 0.0};
      tr.rotation = protocol::yaw_to_quaternion(veh.state.pose.yaw);
      out.transforms.push_back(tr);

      protocol::Telemetry tel;
      tel.vehicle_id = id;
      tel.t_stamp = t_next;
      tel.v = veh.state.v;
      tel.yaw_rate = veh.state.yaw_rate;
      tel.u_d = veh.last.u_d;
      tel.steer = veh.last.input.steer;
      tel.gas = veh.last.input.gas;
      tel.brake = veh.last.input.brake;
      tel.handbrake = veh.last.input.handbrake;
      out.telemetry.push_back(tel);
    }
    ++ticks_;
    return out;
  }

 private:
  void handle(const protocol::InitMessage& m) {
    const auto& p = m.controller_params;
    const std::size_t index = static_cast<std::size_t>(p.at("path"));
    if (index >= paths_.size()) throw OutOfRange("init references unknown path index");
    SimVehicle veh;
    veh.id = m.vehicle_id;
    veh.path_index = index;
    veh.params.mass = p.at("mass");
    veh.params.wheelbase = p.at("wheelbase");
    veh.params.length = p.at("length");
    veh.params.max_steer = p.at("max_steer");
    veh.params.max_drive_force = p.at("max_drive_force");
    veh.params.max_brake_force = p.at("max_brake_force");
    veh.params.handbrake_decel = p.at("handbrake_decel");
    veh.params.drag_coeff = p.at("drag_coeff");
    veh.params.rolling_resist = p.at("rolling_resist");
    veh.params.scale = p.at("scale");
    veh.params.validate();
    const StanleyGains st{p.at("k_a"), p.at("k_e"), p.at("k_y"), p.at("k_s")};
    const LongitudinalGains lg{p.at("kp"), p.at("ki"), p.at("kd"), p.at("k_ff"), p.at("integrator_limit")};
    veh.controller = TrackingController(st, lg);
    const auto& init = m.initial_state;
    veh.state.pose = Pose2(init.x, init.y, init.yaw);
    veh.state.v = init.v;
    veh.state.t = now();
    veh.s_hint = paths_[index].project(veh.state.pose.position()).s;
    veh.appearance = m.appearance;
    vehicles_[m.vehicle_id] = std::move(veh);
  }

  /// Reference position and speed at time t: the latest waypoint carried
  /// forward (or back) with the acceleration implied by the previous one,
  /// holding once the speed reaches zero. Stale waypoints are thereby
  /// dead-reckoned instead of frozen.
  static std::pair<double, double> reference_at(const SimVehicle& veh, double t) {
    const double v0 = veh.waypoint->speed;
    const double a = veh.waypoint_accel;
    double tau = t - veh.waypoint->t_stamp;
    if (a < 0.0 && v0 + a * tau < 0.0) tau = -v0 / a;
    const double v = std::max(0.0, v0 + a * tau);
    return {veh.waypoint_s + v0 * tau + 0.5 * a * tau * tau, v};
  }

  void handle(const protocol::WaypointCommand& m) {
    auto it = vehicles_.find(m.vehicle_id);
    if (it == vehicles_.end()) return;
    SimVehicle& veh = it->second;
    if (veh.waypoint && m.t_stamp < veh.waypoint->t_stamp) return;
    veh.waypoint_accel = 0.0;
    if (veh.waypoint && m.t_stamp > veh.waypoint->t_stamp) {
      veh.waypoint_accel = (m.speed - veh.waypoint->speed) / (m.t_stamp - veh.waypoint->t_stamp);
    }
    veh.waypoint = m;
    veh.waypoint_s = paths_[veh.path_index].project({m.x, m.y}, veh.s_hint).s;
  }

  void handle(const protocol::DespawnCommand& m) { vehicles_.erase(m.vehicle_id); }

  void handle(const protocol::ManualDrive& m) {
    if (auto it = vehicles_.find(m.vehicle_id); it != vehicles_.end()) it->second.manual = m;
  }

  void handle(const protocol::ReleaseManual& m) {
    auto it = vehicles_.find(m.vehicle_id);
    if (it == vehicles_.end()) return;
    it->second.manual.reset();
    it->second.waypoint.reset();
    it->second.controller.reset();
  }

  void handle(const protocol::ResetCommand&) {
    vehicles_.clear();
    ticks_ = 0;
  }

  template <typename Other>
  void handle(const Other&) {}

  std::vector<Path> paths_;
  double dt_;
  std::int64_t ticks_ = 0;
  std::map<std::int64_t, SimVehicle> vehicles_;
};

/// Controller and vehicle parameters packed for an init message.
inline std::map<std::string, double> pack_init_params(std::size_t path_index, const VehicleParams& vp,
                                                      const StanleyGains& st, const LongitudinalGains& lg) {
  return {{"path", static_cast<double>(path_index)},
          {"k_a", st.k_a},
          {"k_e", st.k_e},
          {"k_y", st.k_y},
          {"k_s", st.k_s},
          {"kp", lg.kp},
          {"ki", lg.ki},
          {"kd", lg.kd},
          {"k_ff", lg.k_ff},
          {"integrator_limit", lg.integrator_limit},
          {"mass", vp.mass},
          {"wheelbase", vp.wheelbase},
          {"length", vp.length},
          {"max_steer", vp.max_steer},
          {"max_drive_force", vp.max_drive_force},
          {"max_brake_force", vp.max_brake_force},
          {"handbrake_decel", vp.handbrake_decel},
          {"drag_coeff", vp.drag_coeff},
          {"rolling_resist", vp.rolling_resist},
          {"scale", vp.scale}};
}

}  // namespace cosim::harness

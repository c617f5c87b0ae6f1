#pragma once

// Kinematic bicycle with a longitudinal force balance. Consumes the same
// actuator set as the simulator's car controller (steer, gas, brake,
// handbrake) and advances at a fixed timestep.

#include <algorithm>
#include <cmath>
#include <string>

#include "cosim/error.hpp"
#include "cosim/road_network.hpp"

namespace cosim {

inline constexpr double kDefaultPhysicsDt = 0.01;

struct VehicleParams {
  double mass = 1500.0;             // kg
  double wheelbase = 2.7;           // m
  double length = 4.5;              // m, bumper to bumper
  double max_steer = 0.6;           // rad
  double max_drive_force = 12000.0; // N
  double max_brake_force = 22500.0; // N
  double handbrake_decel = 15.0;    // m/s^2
  double drag_coeff = 0.4;          // N s^2 / m^2
  double rolling_resist = 150.0;    // N
  double scale = 1.0;               // 1 = full size, 25 = testbed

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw OutOfRange(std::string("vehicle ") + name + " must be > 0");
    };
    auto non_negative = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw OutOfRange(std::string("vehicle ") + name + " must be >= 0");
    };
    positive(mass, "mass");
    positive(wheelbase, "wheelbase");
    positive(length, "length");
    positive(max_steer, "max_steer");
    positive(max_drive_force, "max_drive_force");
    positive(max_brake_force, "max_brake_force");
    positive(handbrake_decel, "handbrake_decel");
    non_negative(drag_coeff, "drag_coeff");
    non_negative(rolling_resist, "rolling_resist");
    positive(scale, "scale");
  }

  friend bool operator==(const VehicleParams&, const VehicleParams&) = default;
};

/// Full-size defaults reduced by a geometric scale divisor. Mass is kept and
/// forces follow mass * length / time^2, so trajectories expressed in
/// scale-normalized lengths do not depend on the scale.
inline VehicleParams default_params(double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw OutOfRange("scale must be > 0");
  VehicleParams p;
  p.wheelbase /= scale;
  p.length /= scale;
  p.max_drive_force /= scale;
  p.max_brake_force /= scale;
  p.handbrake_decel /= scale;
  p.rolling_resist /= scale;
  p.drag_coeff *= scale;
  p.scale = scale;
  return p;
}

struct VehicleState {
  Pose2 pose;
  double v = 0.0;         // m/s, never negative
  double yaw_rate = 0.0;  // rad/s
  double t = 0.0;         // s

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ActuatorInput {
  double steer = 0.0;  // rad, positive turns left
  double gas = 0.0;
  double brake = 0.0;
  int handbrake = 0;

  friend bool operator==(const ActuatorInput&, const ActuatorInput&) = default;
};

/// One semi-implicit Euler step. Speed is updated first and the new speed
/// drives yaw and position.
inline VehicleState step(const VehicleState& state, const ActuatorInput& input, const VehicleParams& params,
                         double dt = kDefaultPhysicsDt) {
  if (!std::isfinite(state.pose.x) || !std::isfinite(state.pose.y) || !std::isfinite(state.pose.yaw) ||
      !std::isfinite(state.v) || !std::isfinite(state.yaw_rate) || !std::isfinite(state.t) ||
      !std::isfinite(input.steer) || !std::isfinite(input.gas) || !std::isfinite(input.brake) ||
      !std::isfinite(dt)) {
    throw NonFiniteInput("vehicle step received a non-finite value");
  }
  if (!(dt > 0.0)) throw OutOfRange("dt must be > 0");
  if (input.gas < 0.0 || input.gas > 1.0 || input.brake < 0.0 || input.brake > 1.0 ||
      (input.handbrake != 0 && input.handbrake != 1)) {
    throw OutOfRange("actuator input outside its range");
  }
  if (input.gas > 0.0 && input.brake > 0.0) throw OutOfRange("gas and brake both applied");

  double v = std::max(0.0, state.v);
  if (input.handbrake == 1) {
    v = std::max(0.0, v - params.handbrake_decel * dt);
  } else {
    const double drive = input.gas * params.max_drive_force;
    if (v > 0.0) {
      const double resist = input.brake * params.max_brake_force + params.rolling_resist +
                            params.drag_coeff * v * v;
      v = std::max(0.0, v + (drive - resist) / params.mass * dt);
    } else {
      // Static friction holds the car until drive beats brake and rolling losses.
      const double net = drive - input.brake * params.max_brake_force - params.rolling_resist;
      v = std::max(0.0, net / params.mass * dt);
    }
  }

  const double steer = std::clamp(input.steer, -params.max_steer, params.max_steer);
  VehicleState next;
  next.v = v;
  next.yaw_rate = v * std::tan(steer) / params.wheelbase;
  const double yaw = state.pose.yaw + next.yaw_rate * dt;
  next.pose = Pose2(state.pose.x + v * std::cos(yaw) * dt, state.pose.y + v * std::sin(yaw) * dt, yaw);
  next.t = state.t + dt;
  return next;
}

}  // namespace cosim

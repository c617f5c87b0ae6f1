#pragma once

// Low-level tracking: modified Stanley steering, feedforward-feedback
// longitudinal control and the throttle -> (handbrake, brake, gas) layer.

#include <algorithm>
#include <cmath>
#include <optional>

#include "cosim/error.hpp"
#include "cosim/road_network.hpp"
#include "cosim/vehicle_dynamics.hpp"

namespace cosim {

/// Geometric scale at which the default gains below were tuned (1:25 testbed).
inline constexpr double kReferenceScale = 25.0;

struct Waypoint {
  double t_stamp = 0.0;
  Point2 position;
  double yaw = 0.0;
  double speed = 0.0;

  friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

struct StanleyGains {
  double k_a = 0.05;  // s^2/m, yaw-rate speed coupling
  double k_e = 2.0;   // 1/s, cross-track
  double k_y = 0.1;   // s, yaw-rate damping
  double k_s = 0.1;   // m/s, low-speed softening

  friend bool operator==(const StanleyGains&, const StanleyGains&) = default;
};

struct LongitudinalGains {
  double kp = 50.0;
  double ki = 2.5;
  double kd = 1.25;
  double k_ff = 25.0;
  double integrator_limit = 0.02;

  friend bool operator==(const LongitudinalGains&, const LongitudinalGains&) = default;
};

/// Default Stanley gains converted from the reference scale. Gains that carry
/// a length in their unit follow the geometric scale.
inline StanleyGains default_stanley_gains(double scale = kReferenceScale) {
  const double m = kReferenceScale / scale;  // length multiplier
  StanleyGains g;
  g.k_a /= m;
  g.k_s *= m;
  return g;
}

inline LongitudinalGains default_longitudinal_gains(double scale = kReferenceScale) {
  const double m = kReferenceScale / scale;
  LongitudinalGains g;
  g.kp /= m;
  g.ki /= m;
  g.kd /= m;
  g.k_ff /= m;
  g.integrator_limit *= m;
  return g;
}

/// The steering law on already-formed error signals, before saturation.
/// heading_error and cross_track_error are desired-minus-actual: positive
/// values ask for a left (counterclockwise) correction.
inline double stanley_law(double heading_error, double cross_track_error, double v, double yaw_rate,
                          double desired_yaw_rate, const StanleyGains& g) {
  return (heading_error - g.k_a * v * yaw_rate) + std::atan(g.k_e * cross_track_error / (g.k_s + v)) -
         g.k_y * (yaw_rate - desired_yaw_rate);
}

/// Steering command for a vehicle projected onto its path; the desired yaw
/// rate is the path curvature times the current speed.
inline double stanley_steer(const VehicleState& state, const PathProjection& proj, const StanleyGains& gains,
                            double max_steer) {
  if (!std::isfinite(state.pose.yaw) || !std::isfinite(state.v) || !std::isfinite(state.yaw_rate) ||
      !std::isfinite(proj.lateral_error) || !std::isfinite(proj.path_yaw) || !std::isfinite(proj.curvature)) {
    throw NonFiniteInput("stanley_steer received a non-finite value");
  }
  if (!(gains.k_s > 0.0)) throw OutOfRange("k_s must be > 0");
  const double heading_error = wrap_angle(proj.path_yaw - state.pose.yaw);
  const double desired_yaw_rate = proj.curvature * state.v;
  const double delta =
      stanley_law(heading_error, -proj.lateral_error, state.v, state.yaw_rate, desired_yaw_rate, gains);
  return std::clamp(delta, -max_steer, max_steer);
}

/// PID on along-track position error plus a speed feedforward. Holds the
/// integrator and previous error; one instance per vehicle.
class LongitudinalController {
 public:
  explicit LongitudinalController(LongitudinalGains gains = {}) : gains_(gains) {
    if (!(gains_.integrator_limit > 0.0)) throw OutOfRange("integrator_limit must be > 0");
  }

  /// along_track_error: desired position minus vehicle position along the
  /// path. speed_error: desired speed minus current speed.
  double command(double along_track_error, double speed_error, double dt) {
    if (!std::isfinite(along_track_error) || !std::isfinite(speed_error) || !std::isfinite(dt)) {
      throw NonFiniteInput("longitudinal_command received a non-finite value");
    }
    if (!(dt > 0.0)) throw OutOfRange("dt must be > 0");
    integral_ = std::clamp(integral_ + along_track_error * dt, -gains_.integrator_limit, gains_.integrator_limit);
    const double derivative = prev_error_ ? (along_track_error - *prev_error_) / dt : 0.0;
    prev_error_ = along_track_error;
    const double u = gains_.kp * along_track_error + gains_.ki * integral_ + gains_.kd * derivative +
                     gains_.k_ff * speed_error;
    return std::clamp(u, -1.0, 1.0);
  }

  double command(const VehicleState& state, const PathProjection& proj, double desired_s, double desired_speed,
                 double dt) {
    return command(desired_s - proj.s, desired_speed - state.v, dt);
  }

  void reset() {
    integral_ = 0.0;
    prev_error_.reset();
  }

  const LongitudinalGains& gains() const { return gains_; }
  double integral() const { return integral_; }

 private:
  LongitudinalGains gains_;
  double integral_ = 0.0;
  std::optional<double> prev_error_;
};

struct ThrottleTriple {
  int handbrake = 0;
  double brake = 0.0;
  double gas = 0.0;

  friend bool operator==(const ThrottleTriple&, const ThrottleTriple&) = default;
};

inline ThrottleTriple throttle_map(double u_d) {
  if (!(u_d >= -1.0 && u_d <= 1.0)) throw OutOfRange("desired throttle outside [-1, 1]");
  ThrottleTriple out;
  out.handbrake = u_d <= -0.5 ? 1 : 0;
  out.brake = std::max(0.0, -u_d) * (1 - out.handbrake);
  out.gas = std::max(0.0, u_d) * (1 - out.handbrake);
  return out;
}

/// Result of one tracking update.
struct TrackingOutput {
  ActuatorInput input;
  double u_d = 0.0;
};

/// Composes steering, longitudinal control and throttle mapping for a single
/// vehicle that follows a reference moving along its path.
class TrackingController {
 public:
  TrackingController(StanleyGains stanley, LongitudinalGains longitudinal)
      : stanley_(stanley), longitudinal_(longitudinal) {}

  TrackingOutput update(const VehicleState& state, const PathProjection& proj, double reference_s,
                        double reference_speed, double max_steer, double dt) {
    TrackingOutput out;
    out.u_d = longitudinal_.command(state, proj, reference_s, reference_speed, dt);
    const ThrottleTriple t = throttle_map(out.u_d);
    out.input.steer = stanley_steer(state, proj, stanley_, max_steer);
    out.input.gas = t.gas;
    out.input.brake = t.brake;
    out.input.handbrake = t.handbrake;
    return out;
  }

  /// Direct actuation in normalized units, bypassing the reference.
  static TrackingOutput manual(double steer_fraction, double throttle, double max_steer) {
    TrackingOutput out;
    out.u_d = std::clamp(throttle, -1.0, 1.0);
    const ThrottleTriple t = throttle_map(out.u_d);
    out.input.steer = std::clamp(steer_fraction, -1.0, 1.0) * max_steer;
    out.input.gas = t.gas;
    out.input.brake = t.brake;
    out.input.handbrake = t.handbrake;
    return out;
  }

  void reset() { longitudinal_.reset(); }
  const StanleyGains& stanley_gains() const { return stanley_; }
  const LongitudinalGains& longitudinal_gains() const { return longitudinal_.gains(); }

 private:
  StanleyGains stanley_;
  LongitudinalController longitudinal_;
};

}  // namespace cosim

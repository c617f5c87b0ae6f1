#pragma once

// Wire messages exchanged between the mainframe, the simulator and the
// operator console, with a canonical text encoding: one JSON object per
// message, fixed field order, shortest round-trip decimals, no whitespace
// and a single trailing linefeed.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cosim/error.hpp"

namespace cosim::protocol {

struct InitialState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double v = 0.0;
  friend bool operator==(const InitialState&, const InitialState&) = default;
};

/// Spawns (or respawns) a vehicle in the simulator.
struct InitMessage {
  std::int64_t vehicle_id = 0;
  std::string algorithm = "idm";
  std::map<std::string, double> controller_params;
  InitialState initial_state;
  std::string appearance;
  friend bool operator==(const InitMessage&, const InitMessage&) = default;
};

struct WaypointCommand {
  std::int64_t vehicle_id = 0;
  double t_stamp = 0.0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double speed = 0.0;
  friend bool operator==(const WaypointCommand&, const WaypointCommand&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Quaternion {
  double qx = 0.0;
  double qy = 0.0;
  double qz = 0.0;
  double qw = 1.0;
  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

/// Motion-capture style pose sample.
struct TransformReport {
  std::int64_t vehicle_id = 0;
  double t_stamp = 0.0;
  Vec3 position;
  Quaternion rotation;
  friend bool operator==(const TransformReport&, const TransformReport&) = default;
};

/// Asks the simulator to advance `steps` physics ticks for planner tick `tick`.
struct StepCommand {
  std::int64_t tick = 0;
  std::int64_t steps = 1;
  friend bool operator==(const StepCommand&, const StepCommand&) = default;
};

struct StepDone {
  std::int64_t tick = 0;
  friend bool operator==(const StepDone&, const StepDone&) = default;
};

/// Actuator and speed readout published with the last transform of a step.
struct Telemetry {
  std::int64_t vehicle_id = 0;
  double t_stamp = 0.0;
  double v = 0.0;
  double yaw_rate = 0.0;
  double u_d = 0.0;
  double steer = 0.0;
  double gas = 0.0;
  double brake = 0.0;
  std::int64_t handbrake = 0;
  friend bool operator==(const Telemetry&, const Telemetry&) = default;
};

struct ResetCommand {
  friend bool operator==(const ResetCommand&, const ResetCommand&) = default;
};

struct DespawnCommand {
  std::int64_t vehicle_id = 0;
  friend bool operator==(const DespawnCommand&, const DespawnCommand&) = default;
};

/// Operator override: steer and throttle are normalized to [-1, 1].
struct ManualDrive {
  std::int64_t vehicle_id = 0;
  double steer = 0.0;
  double throttle = 0.0;
  friend bool operator==(const ManualDrive&, const ManualDrive&) = default;
};

struct ReleaseManual {
  std::int64_t vehicle_id = 0;
  friend bool operator==(const ReleaseManual&, const ReleaseManual&) = default;
};

struct StartCommand {
  friend bool operator==(const StartCommand&, const StartCommand&) = default;
};
struct PauseCommand {
  friend bool operator==(const PauseCommand&, const PauseCommand&) = default;
};
struct ReplayCommand {
  friend bool operator==(const ReplayCommand&, const ReplayCommand&) = default;
};

struct VehicleFrame {
  std::int64_t vehicle_id = 0;
  std::string status;
  double t = 0.0;
  double p = 0.0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double v = 0.0;
  double u_d = 0.0;
  double steer = 0.0;
  double gas = 0.0;
  double brake = 0.0;
  std::int64_t handbrake = 0;
  friend bool operator==(const VehicleFrame&, const VehicleFrame&) = default;
};

/// Console state snapshot pushed by the gateway.
struct StateFrame {
  std::string state;
  double clock = 0.0;
  std::vector<VehicleFrame> vehicles;
  friend bool operator==(const StateFrame&, const StateFrame&) = default;
};

struct Ack {
  std::string command;
  friend bool operator==(const Ack&, const Ack&) = default;
};

struct ErrorReply {
  std::string message;
  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

using Message = std::variant<InitMessage, WaypointCommand, TransformReport, StepCommand, StepDone, Telemetry,
                             ResetCommand, DespawnCommand, ManualDrive, ReleaseManual, StartCommand, PauseCommand,
                             ReplayCommand, StateFrame, Ack, ErrorReply>;

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Base of decode failures; offset is the byte position of the problem.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : Error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class MalformedMessage : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class UnknownType : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class RangeError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

/// Keys an `idm` init message must carry in controller_params.
inline const std::vector<std::string>& required_params(const std::string& algorithm) {
  static const std::vector<std::string> idm = {
      "path",           "k_a",         "k_e",        "k_y",          "k_s",
      "kp",             "ki",          "kd",         "k_ff",         "integrator_limit",
      "mass",           "wheelbase",   "length",     "max_steer",    "max_drive_force",
      "max_brake_force", "handbrake_decel", "drag_coeff", "rolling_resist", "scale"};
  static const std::vector<std::string> none;
  return algorithm == "idm" ? idm : none;
}

inline bool known_algorithm(const std::string& algorithm) { return algorithm == "idm"; }

/// Unit quaternion of a pure rotation about +z.
inline Quaternion yaw_to_quaternion(double yaw) {
  return {0.0, 0.0, std::sin(yaw / 2.0), std::cos(yaw / 2.0)};
}

inline double quaternion_to_yaw(const Quaternion& q) {
  // Planar rotations only; roll and pitch are ignored.
  return 2.0 * std::atan2(q.qz, q.qw);
}

inline const char* type_name(const Message& m) {
  static constexpr const char* names[] = {"init",     "waypoint",     "transform",      "step",
                                          "step_done", "telemetry",   "reset",          "despawn",
                                          "manual_drive", "release_manual", "start",    "pause",
                                          "replay",   "state",        "ack",            "error"};
  return names[m.index()];
}

namespace detail {

class Writer {
 public:
  void open() { out_ += '{'; first_ = true; }
  void close() { out_ += '}'; first_ = false; }
  void open_array() { out_ += '['; first_ = true; }
  void close_array() { out_ += ']'; first_ = false; }

  void key(std::string_view k) {
    if (!first_) out_ += ',';
    first_ = false;
    string_literal(k);
    out_ += ':';
    first_ = true;  // value follows; no comma
  }
  void element() {
    if (!first_) out_ += ',';
    first_ = true;
  }

  void field(std::string_view k, double v) {
    key(k);
    number(v);
    first_ = false;
  }
  void field(std::string_view k, std::int64_t v) {
    key(k);
    out_ += std::to_string(v);
    first_ = false;
  }
  void field(std::string_view k, std::string_view v) {
    key(k);
    string_literal(v);
    first_ = false;
  }

  void number(double v) {
    if (!std::isfinite(v)) throw InvariantViolation("cannot encode a non-finite number");
    if (v == 0.0) v = 0.0;  // no negative zero on the wire
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out_.append(buf, res.ptr);
  }

  void string_literal(std::string_view s) {
    out_ += '"';
    for (unsigned char c : s) {
      switch (c) {
        case '"': out_ += "\\\""; break;
        case '\\': out_ += "\\\\"; break;
        case '\n': out_ += "\\n"; break;
        case '\r': out_ += "\\r"; break;
        case '\t': out_ += "\\t"; break;
        case '\b': out_ += "\\b"; break;
        case '\f': out_ += "\\f"; break;
        default:
          if (c < 0x20) {
            static constexpr char hex[] = "0123456789abcdef";
            out_ += "\\u00";
            out_ += hex[c >> 4];
            out_ += hex[c & 0xF];
          } else {
            out_ += static_cast<char>(c);
          }
      }
    }
    out_ += '"';
  }

  void after_value() { first_ = false; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
  bool first_ = true;
};

inline void check_finite(double v, const char* field) {
  if (!std::isfinite(v)) throw InvariantViolation(std::string(field) + " is not finite");
}

inline void check_id(std::int64_t id) {
  if (id < 0) throw InvariantViolation("vehicle_id must be non-negative");
}

inline void check_unit(double v, const char* field, double lo, double hi) {
  check_finite(v, field);
  if (v < lo || v > hi) throw InvariantViolation(std::string(field) + " outside its range");
}

inline void validate(const InitMessage& m) {
  check_id(m.vehicle_id);
  if (!known_algorithm(m.algorithm)) throw InvariantViolation("unknown algorithm '" + m.algorithm + "'");
  for (const auto& k : required_params(m.algorithm)) {
    if (!m.controller_params.count(k)) throw InvariantViolation("missing controller parameter '" + k + "'");
  }
  for (const auto& [k, v] : m.controller_params) check_finite(v, k.c_str());
  check_finite(m.initial_state.x, "x");
  check_finite(m.initial_state.y, "y");
  check_finite(m.initial_state.yaw, "yaw");
  check_finite(m.initial_state.v, "v");
  if (m.initial_state.v < 0.0) throw InvariantViolation("initial speed must be >= 0");
}

inline void validate(const WaypointCommand& m) {
  check_id(m.vehicle_id);
  check_finite(m.t_stamp, "t_stamp");
  check_finite(m.x, "x");
  check_finite(m.y, "y");
  check_finite(m.yaw, "yaw");
  check_finite(m.speed, "speed");
  if (m.speed < 0.0) throw InvariantViolation("speed must be >= 0");
}

inline void validate(const TransformReport& m) {
  check_id(m.vehicle_id);
  check_finite(m.t_stamp, "t_stamp");
  check_finite(m.position.x, "x");
  check_finite(m.position.y, "y");
  check_finite(m.position.z, "z");
  const auto& q = m.rotation;
  check_finite(q.qx, "qx");
  check_finite(q.qy, "qy");
  check_finite(q.qz, "qz");
  check_finite(q.qw, "qw");
  const double n = std::sqrt(q.qx * q.qx + q.qy * q.qy + q.qz * q.qz + q.qw * q.qw);
  if (std::abs(n - 1.0) > 1e-9) throw InvariantViolation("rotation is not a unit quaternion");
}

inline void validate(const StepCommand& m) {
  if (m.tick < 0 || m.steps < 1) throw InvariantViolation("step needs tick >= 0 and steps >= 1");
}
inline void validate(const StepDone& m) {
  if (m.tick < 0) throw InvariantViolation("tick must be >= 0");
}

inline void validate(const Telemetry& m) {
  check_id(m.vehicle_id);
  check_finite(m.t_stamp, "t_stamp");
  check_finite(m.v, "v");
  check_finite(m.yaw_rate, "yaw_rate");
  check_unit(m.u_d, "u_d", -1.0, 1.0);
  check_finite(m.steer, "steer");
  check_unit(m.gas, "gas", 0.0, 1.0);
  check_unit(m.brake, "brake", 0.0, 1.0);
  if (m.handbrake != 0 && m.handbrake != 1) throw InvariantViolation("handbrake must be 0 or 1");
  if (m.v < 0.0) throw InvariantViolation("v must be >= 0");
}

inline void validate(const ResetCommand&) {}
inline void validate(const StartCommand&) {}
inline void validate(const PauseCommand&) {}
inline void validate(const ReplayCommand&) {}
inline void validate(const DespawnCommand& m) { check_id(m.vehicle_id); }
inline void validate(const ReleaseManual& m) { check_id(m.vehicle_id); }

inline void validate(const ManualDrive& m) {
  check_id(m.vehicle_id);
  check_unit(m.steer, "steer", -1.0, 1.0);
  check_unit(m.throttle, "throttle", -1.0, 1.0);
}

inline void validate(const VehicleFrame& m) {
  check_id(m.vehicle_id);
  for (double v : {m.t, m.p, m.x, m.y, m.yaw, m.v, m.u_d, m.steer, m.gas, m.brake}) check_finite(v, "vehicle frame");
  if (m.handbrake != 0 && m.handbrake != 1) throw InvariantViolation("handbrake must be 0 or 1");
}

inline void validate(const StateFrame& m) {
  check_finite(m.clock, "clock");
  for (const auto& v : m.vehicles) validate(v);
}

inline void validate(const Ack&) {}
inline void validate(const ErrorReply&) {}

inline void write_body(Writer& w, const InitMessage& m) {
  w.field("vehicle_id", m.vehicle_id);
  w.field("algorithm", m.algorithm);
  w.key("controller_params");
  w.open();
  for (const auto& [k, v] : m.controller_params) w.field(k, v);
  w.close();
  w.key("initial_state");
  w.open();
  w.field("x", m.initial_state.x);
  w.field("y", m.initial_state.y);
  w.field("yaw", m.initial_state.yaw);
  w.field("v", m.initial_state.v);
  w.close();
  w.field("appearance", m.appearance);
}

inline void write_body(Writer& w, const WaypointCommand& m) {
  w.field("vehicle_id", m.vehicle_id);
  w.field("t_stamp", m.t_stamp);
  w.field("x", m.x);
  w.field("y", m.y);
  w.field("yaw", m.yaw);
  w.field("speed", m.speed);
}

inline void write_body(Writer& w, const TransformReport& m) {
  w.field("vehicle_id", m.vehicle_id);
  w.field("t_stamp", m.t_stamp);
  w.key("position");
  w.open();
  w.field("x", m.position.x);
  w.field("y", m.position.y);
  w.field("z", m.position.z);
  w.close();
  w.key("rotation");
  w.open();
  w.field("qx", m.rotation.qx);
  w.field("qy", m.rotation.qy);
  w.field("qz", m.rotation.qz);
  w.field("qw", m.rotation.qw);
  w.close();
}

inline void write_body(Writer& w, const StepCommand& m) {
  w.field("tick", m.tick);
  w.field("steps", m.steps);
}
inline void write_body(Writer& w, const StepDone& m) { w.field("tick", m.tick); }

inline void write_body(Writer& w, const Telemetry& m) {
  w.field("vehicle_id", m.vehicle_id);
  w.field("t_stamp", m.t_stamp);
  w.field("v", m.v);
  w.field("yaw_rate", m.yaw_rate);
  w.field("u_d", m.u_d);
  w.field("steer", m.steer);
  w.field("gas", m.gas);
  w.field("brake", m.brake);
  w.field("handbrake", m.handbrake);
}

inline void write_body(Writer&, const ResetCommand&) {}
inline void write_body(Writer&, const StartCommand&) {}
inline void write_body(Writer&, const PauseCommand&) {}
inline void write_body(Writer&, const ReplayCommand&) {}
inline void write_body(Writer& w, const DespawnCommand& m) { w.field("vehicle_id", m.vehicle_id); }
inline void write_body(Writer& w, const ReleaseManual& m) { w.field("vehicle_id", m.vehicle_id); }

inline void write_body(Writer& w, const ManualDrive& m) {
  w.field("vehicle_id", m.vehicle_id);
  w.field("steer", m.steer);
  w.field("throttle", m.throttle);
}

inline void write_body(Writer& w, const StateFrame& m) {
  w.field("state", m.state);
  w.field("clock", m.clock);
  w.key("vehicles");
  w.open_array();
  for (const auto& v : m.vehicles) {
    w.element();
    w.open();
    w.field("vehicle_id", v.vehicle_id);
    w.field("status", v.status);
    w.field("t", v.t);
    w.field("p", v.p);
    w.field("x", v.x);
    w.field("y", v.y);
    w.field("yaw", v.yaw);
    w.field("v", v.v);
    w.field("u_d", v.u_d);
    w.field("steer", v.steer);
    w.field("gas", v.gas);
    w.field("brake", v.brake);
    w.field("handbrake", v.handbrake);
    w.close();
  }
  w.close_array();
}

inline void write_body(Writer& w, const Ack& m) { w.field("command", m.command); }
inline void write_body(Writer& w, const ErrorReply& m) { w.field("message", m.message); }

// ---- decoding ---------------------------------------------------------------

using nlohmann::json;

struct Reader {
  std::string_view raw;

  std::size_t offset_of(std::string_view field) const {
    const std::string needle = "\"" + std::string(field) + "\"";
    const auto pos = raw.find(needle);
    return pos == std::string_view::npos ? 0 : pos;
  }

  const json& at(const json& obj, const char* field) const {
    auto it = obj.find(field);
    if (it == obj.end()) throw MalformedMessage(std::string("missing field '") + field + "'", raw.size());
    return *it;
  }

  double number(const json& obj, const char* field) const {
    const json& v = at(obj, field);
    if (!v.is_number()) throw MalformedMessage(std::string("field '") + field + "' is not a number", offset_of(field));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw RangeError(std::string("field '") + field + "' is not finite", offset_of(field));
    return d;
  }

  double unit(const json& obj, const char* field, double lo, double hi) const {
    const double d = number(obj, field);
    if (d < lo || d > hi) throw RangeError(std::string("field '") + field + "' out of range", offset_of(field));
    return d;
  }

  std::int64_t integer(const json& obj, const char* field, std::int64_t lo = 0) const {
    const json& v = at(obj, field);
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX)) {
        throw RangeError(std::string("field '") + field + "' too large", offset_of(field));
      }
      return static_cast<std::int64_t>(u);
    }
    if (!v.is_number_integer()) {
      throw MalformedMessage(std::string("field '") + field + "' is not an integer", offset_of(field));
    }
    const auto i = v.get<std::int64_t>();
    if (i < lo) throw RangeError(std::string("field '") + field + "' out of range", offset_of(field));
    return i;
  }

  std::string string(const json& obj, const char* field) const {
    const json& v = at(obj, field);
    if (!v.is_string()) throw MalformedMessage(std::string("field '") + field + "' is not a string", offset_of(field));
    return v.get<std::string>();
  }

  const json& object(const json& obj, const char* field) const {
    const json& v = at(obj, field);
    if (!v.is_object()) throw MalformedMessage(std::string("field '") + field + "' is not an object", offset_of(field));
    return v;
  }
};

inline Message read_message(const Reader& r, const json& j, const std::string& type) {
  if (type == "init") {
    InitMessage m;
    m.vehicle_id = r.integer(j, "vehicle_id");
    m.algorithm = r.string(j, "algorithm");
    if (!known_algorithm(m.algorithm)) throw RangeError("unknown algorithm '" + m.algorithm + "'", r.offset_of("algorithm"));
    const json& params = r.object(j, "controller_params");
    for (const auto& [k, v] : params.items()) {
      if (!v.is_number()) throw MalformedMessage("controller parameter '" + k + "' is not a number", r.offset_of(k));
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw RangeError("controller parameter '" + k + "' is not finite", r.offset_of(k));
      m.controller_params[k] = d;
    }
    for (const auto& k : required_params(m.algorithm)) {
      if (!m.controller_params.count(k)) {
        throw MalformedMessage("missing controller parameter '" + k + "'", r.offset_of("controller_params"));
      }
    }
    const json& s = r.object(j, "initial_state");
    m.initial_state = {r.number(s, "x"), r.number(s, "y"), r.number(s, "yaw"), r.number(s, "v")};
    if (m.initial_state.v < 0.0) throw RangeError("initial speed must be >= 0", r.offset_of("v"));
    m.appearance = r.string(j, "appearance");
    return m;
  }
  if (type == "waypoint") {
    WaypointCommand m;
    m.vehicle_id = r.integer(j, "vehicle_id");
    m.t_stamp = r.number(j, "t_stamp");
    m.x = r.number(j, "x");
    m.y = r.number(j, "y");
    m.yaw = r.number(j, "yaw");
    m.speed = r.number(j, "speed");
    if (m.speed < 0.0) throw RangeError("speed must be >= 0", r.offset_of("speed"));
    return m;
  }
  if (type == "transform") {
    TransformReport m;
    m.vehicle_id = r.integer(j, "vehicle_id");
    m.t_stamp = r.number(j, "t_stamp");
    const json& p = r.object(j, "position");
    m.position = {r.number(p, "x"), r.number(p, "y"), r.number(p, "z")};
    const json& q = r.object(j, "rotation");
    m.rotation = {r.number(q, "qx"), r.number(q, "qy"), r.number(q, "qz"), r.number(q, "qw")};
    const auto& k = m.rotation;
    const double n = std::sqrt(k.qx * k.qx + k.qy * k.qy + k.qz * k.qz + k.qw * k.qw);
    if (std::abs(n - 1.0) > 1e-9) throw RangeError("rotation is not a unit quaternion", r.offset_of("rotation"));
    return m;
  }
  if (type == "step") {
    StepCommand m;
    m.tick = r.integer(j, "tick");
    m.steps = r.integer(j, "steps", 1);
    return m;
  }
  if (type == "step_done") return StepDone{r.integer(j, "tick")};
  if (type == "telemetry") {
    Telemetry m;
    m.vehicle_id = r.integer(j, "vehicle_id");
    m.t_stamp = r.number(j, "t_stamp");
    m.v = r.number(j, "v");
    if (m.v < 0.0) throw RangeError("v must be >= 0", r.offset_of("v"));
    m.yaw_rate = r.number(j, "yaw_rate");
    m.u_d = r.unit(j, "u_d", -1.0, 1.0);
    m.steer = r.number(j, "steer");
    m.gas = r.unit(j, "gas", 0.0, 1.0);
    m.brake = r.unit(j, "brake", 0.0, 1.0);
    m.handbrake = r.integer(j, "handbrake");
    if (m.handbrake > 1) throw RangeError("handbrake must be 0 or 1", r.offset_of("handbrake"));
    return m;
  }
  if (type == "reset") return ResetCommand{};
  if (type == "start") return StartCommand{};
  if (type == "pause") return PauseCommand{};
  if (type == "replay") return ReplayCommand{};
  if (type == "despawn") return DespawnCommand{r.integer(j, "vehicle_id")};
  if (type == "release_manual") return ReleaseManual{r.integer(j, "vehicle_id")};
  if (type == "manual_drive") {
    ManualDrive m;
    m.vehicle_id = r.integer(j, "vehicle_id");
    m.steer = r.unit(j, "steer", -1.0, 1.0);
    m.throttle = r.unit(j, "throttle", -1.0, 1.0);
    return m;
  }
  if (type == "state") {
    StateFrame m;
    m.state = r.string(j, "state");
    m.clock = r.number(j, "clock");
    const json& list = r.at(j, "vehicles");
    if (!list.is_array()) throw MalformedMessage("field 'vehicles' is not an array", r.offset_of("vehicles"));
    for (const auto& v : list) {
      if (!v.is_object()) throw MalformedMessage("vehicle entry is not an object", r.offset_of("vehicles"));
      VehicleFrame f;
      f.vehicle_id = r.integer(v, "vehicle_id");
      f.status = r.string(v, "status");
      f.t = r.number(v, "t");
      f.p = r.number(v, "p");
      f.x = r.number(v, "x");
      f.y = r.number(v, "y");
      f.yaw = r.number(v, "yaw");
      f.v = r.number(v, "v");
      f.u_d = r.number(v, "u_d");
      f.steer = r.number(v, "steer");
      f.gas = r.number(v, "gas");
      f.brake = r.number(v, "brake");
      f.handbrake = r.integer(v, "handbrake");
      if (f.handbrake > 1) throw RangeError("handbrake must be 0 or 1", r.offset_of("handbrake"));
      m.vehicles.push_back(std::move(f));
    }
    return m;
  }
  if (type == "ack") return Ack{r.string(j, "command")};
  if (type == "error") return ErrorReply{r.string(j, "message")};
  throw UnknownType("unknown message type '" + type + "'", r.offset_of("type"));
}

}  // namespace detail

/// Canonical encoding, newline terminated. Throws InvariantViolation when the
/// message breaks its type's invariants.
inline std::string encode(const Message& message) {
  detail::Writer w;
  std::visit(
      [&](const auto& m) {
        detail::validate(m);
        w.open();
        w.field("type", std::string_view(type_name(message)));
        detail::write_body(w, m);
        w.close();
      },
      message);
  std::string out = w.take();
  out += '\n';
  return out;
}

/// Parses exactly one message (a trailing linefeed is allowed).
inline Message decode(std::string_view bytes) {
  using nlohmann::json;
  constexpr int kMaxDepth = 16;
  {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      const char c = bytes[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
      } else if (c == '"') {
        in_string = true;
      } else if (c == '{' || c == '[') {
        if (++depth > kMaxDepth) throw MalformedMessage("nesting too deep", i);
      } else if (c == '}' || c == ']') {
        --depth;
      }
    }
  }
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw MalformedMessage(std::string("syntax error: ") + e.what(), e.byte == 0 ? 0 : e.byte - 1);
  } catch (const json::exception& e) {
    throw MalformedMessage(std::string("syntax error: ") + e.what(), 0);
  }
  if (!j.is_object()) throw MalformedMessage("message is not an object", 0);
  detail::Reader r{bytes};
  auto it = j.find("type");
  if (it == j.end()) throw MalformedMessage("missing field 'type'", 0);
  if (!it->is_string()) throw MalformedMessage("field 'type' is not a string", r.offset_of("type"));
  try {
    return detail::read_message(r, j, it->get<std::string>());
  } catch (const DecodeError&) {
    throw;
  } catch (const json::exception& e) {
    throw MalformedMessage(e.what(), 0);
  }
}

}  // namespace cosim::protocol

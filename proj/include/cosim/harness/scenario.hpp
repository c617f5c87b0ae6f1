#pragma once

// Scenario files: JSON documents naming path files, parameter sets, vehicles
// and yield rules. Loading resolves every reference and validates the
// cross-field invariants up front.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cosim/behavior_idm.hpp"
#include "cosim/controller_stack.hpp"
#include "cosim/road_network.hpp"
#include "cosim/vehicle_dynamics.hpp"

namespace cosim::harness {

/// Scenario problem with its location: "line L, column C" for syntax errors
/// or a JSON pointer such as "/vehicles/2/id" for semantic ones.
class ScenarioError : public Error {
 public:
  ScenarioError(const std::string& location, const std::string& what)
      : Error(location + ": " + what), location_(location) {}
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

class ParseError : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};
class UnknownReference : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};
class InvariantViolation : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

struct ControllerGains {
  StanleyGains stanley;
  LongitudinalGains longitudinal;
};

struct VehicleSpec {
  int id = 0;
  std::string path_id;
  double s = 0.0;  // initial front-bumper arc length on the path
  double v = 0.0;
  std::string vehicle_params;
  std::string idm_params;
  std::string controller_gains;
  std::string appearance;
};

struct MergeSpec {
  std::string path_a;
  std::string path_b;
  Point2 point;
  std::optional<double> aligned_position;
};

struct ScenarioConfig {
  std::string name;
  double scale = 1.0;
  double physics_dt = kDefaultPhysicsDt;
  double planner_dt = kDefaultPlannerDt;
  double duration = 60.0;
  std::int64_t seed = 0;
  std::vector<Path> paths;  // merge offsets already applied
  std::vector<MergeSpec> merges;
  std::map<std::string, VehicleParams> vehicle_params;
  std::map<std::string, IDMParams> idm_params;
  std::map<std::string, ControllerGains> controller_gains;
  std::vector<VehicleSpec> vehicles;
  std::vector<YieldRule> yield_rules;

  int physics_steps_per_tick() const { return static_cast<int>(std::llround(planner_dt / physics_dt)); }

  const Path& path(const std::string& id) const {
    for (const auto& p : paths) {
      if (p.id() == id) return p;
    }
    throw UnknownReference("/paths", "no path '" + id + "'");
  }

  std::size_t path_index(const std::string& id) const {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (paths[i].id() == id) return i;
    }
    throw UnknownReference("/paths", "no path '" + id + "'");
  }

  MergeMap merge_map() const {
    MergeMap m;
    for (const auto& spec : merges) {
      const Path& a = path(spec.path_a);
      m.add(spec.path_a, spec.path_b, a.to_aligned(a.project(spec.point).s));
    }
    return m;
  }
};

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) throw InvariantViolation(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw InvariantViolation(where + "/" + key, "missing field");
  return *it;
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw InvariantViolation(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw InvariantViolation(where, "not finite");
  return d;
}

inline std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) throw InvariantViolation(where, "expected a string");
  return v.get<std::string>();
}

inline void override_number(const json& obj, const char* key, double& target, const std::string& where) {
  if (auto it = obj.find(key); it != obj.end()) target = number(*it, where + "/" + key);
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [k, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw InvariantViolation(where + "/" + k, "unknown field");
  }
}

}  // namespace detail

/// Parses a scenario document. Relative path files resolve against base_dir.
inline ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  using detail::json;
  using detail::number;
  using detail::require;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line/column location.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col), e.what());
  }
  if (!doc.is_object()) throw ParseError("line 1, column 1", "scenario must be an object");
  detail::reject_unknown(doc,
                         {"name", "scale", "physics_dt", "planner_dt", "duration", "seed", "paths", "merges",
                          "vehicle_params", "idm_params", "controller_gains", "vehicles", "yield_rules"},
                         "");

  ScenarioConfig cfg;
  if (auto it = doc.find("name"); it != doc.end()) cfg.name = detail::text(*it, "/name");
  cfg.scale = number(require(doc, "scale", ""), "/scale");
  if (!(cfg.scale > 0.0)) throw InvariantViolation("/scale", "must be > 0");
  detail::override_number(doc, "physics_dt", cfg.physics_dt, "");
  detail::override_number(doc, "planner_dt", cfg.planner_dt, "");
  detail::override_number(doc, "duration", cfg.duration, "");
  if (!(cfg.physics_dt > 0.0)) throw InvariantViolation("/physics_dt", "must be > 0");
  if (!(cfg.planner_dt > 0.0)) throw InvariantViolation("/planner_dt", "must be > 0");
  const double ratio = cfg.planner_dt / cfg.physics_dt;
  if (std::llround(ratio) < 1 || std::abs(ratio - static_cast<double>(std::llround(ratio))) > 1e-9) {
    throw InvariantViolation("/planner_dt", "must be an integer multiple of physics_dt");
  }
  if (!(cfg.duration >= 0.0)) throw InvariantViolation("/duration", "must be >= 0");
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_integer()) throw InvariantViolation("/seed", "expected an integer");
    cfg.seed = it->get<std::int64_t>();
  }

  // Paths.
  const json& paths = require(doc, "paths", "");
  if (!paths.is_array() || paths.empty()) throw InvariantViolation("/paths", "expected a non-empty array");
  std::vector<Path> raw_paths;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const std::string where = "/paths/" + std::to_string(i);
    const std::string id = detail::text(require(paths[i], "id", where), where + "/id");
    const std::string file = detail::text(require(paths[i], "file", where), where + "/file");
    for (const auto& p : raw_paths) {
      if (p.id() == id) throw InvariantViolation(where + "/id", "duplicate path id '" + id + "'");
    }
    std::filesystem::path full = file;
    if (full.is_relative()) full = base_dir / full;
    try {
      raw_paths.push_back(load_path(full.string(), id));
    } catch (const PathFileError& e) {
      throw ParseError(where + "/file (" + full.string() + ")", e.what());
    }
  }
  cfg.paths = raw_paths;
  auto find_path = [&](const std::string& id, const std::string& where) -> std::size_t {
    for (std::size_t i = 0; i < cfg.paths.size(); ++i) {
      if (cfg.paths[i].id() == id) return i;
    }
    throw UnknownReference(where, "no path '" + id + "'");
  };

  // Merges: align the second path of each pair onto the first.
  if (auto it = doc.find("merges"); it != doc.end()) {
    if (!it->is_array()) throw InvariantViolation("/merges", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string where = "/merges/" + std::to_string(i);
      const json& m = (*it)[i];
      const json& pair = require(m, "paths", where);
      if (!pair.is_array() || pair.size() != 2) throw InvariantViolation(where + "/paths", "expected two path ids");
      MergeSpec spec;
      spec.path_a = detail::text(pair[0], where + "/paths/0");
      spec.path_b = detail::text(pair[1], where + "/paths/1");
      const json& pt = require(m, "point", where);
      if (!pt.is_array() || pt.size() != 2) throw InvariantViolation(where + "/point", "expected [x, y]");
      spec.point = {number(pt[0], where + "/point/0"), number(pt[1], where + "/point/1")};
      if (auto ap = m.find("aligned_position"); ap != m.end()) {
        spec.aligned_position = number(*ap, where + "/aligned_position");
      }
      const std::size_t ia = find_path(spec.path_a, where + "/paths/0");
      const std::size_t ib = find_path(spec.path_b, where + "/paths/1");
      try {
        auto [a, b] = align_to_merge(cfg.paths[ia], cfg.paths[ib], spec.point, spec.aligned_position);
        cfg.paths[ia] = a;
        cfg.paths[ib] = b;
      } catch (const MergePointNotOnPath& e) {
        throw InvariantViolation(where + "/point", e.what());
      }
      cfg.merges.push_back(spec);
    }
  }

  // Named parameter sets.
  if (auto it = doc.find("vehicle_params"); it != doc.end()) {
    for (const auto& [name, body] : it->items()) {
      const std::string where = "/vehicle_params/" + name;
      VehicleParams p = default_params(cfg.scale);
      if (!body.is_object()) throw InvariantViolation(where, "expected an object");
      detail::reject_unknown(body,
                             {"base", "mass", "wheelbase", "length", "max_steer", "max_drive_force",
                              "max_brake_force", "handbrake_decel", "drag_coeff", "rolling_resist"},
                             where);
      for (const char* k : {"mass", "wheelbase", "length", "max_steer", "max_drive_force", "max_brake_force",
                            "handbrake_decel", "drag_coeff", "rolling_resist"}) {
        double* field = nullptr;
        const std::string key = k;
        if (key == "mass") field = &p.mass;
        if (key == "wheelbase") field = &p.wheelbase;
        if (key == "length") field = &p.length;
        if (key == "max_steer") field = &p.max_steer;
        if (key == "max_drive_force") field = &p.max_drive_force;
        if (key == "max_brake_force") field = &p.max_brake_force;
        if (key == "handbrake_decel") field = &p.handbrake_decel;
        if (key == "drag_coeff") field = &p.drag_coeff;
        if (key == "rolling_resist") field = &p.rolling_resist;
        detail::override_number(body, k, *field, where);
      }
      try {
        p.validate();
      } catch (const Error& e) {
        throw InvariantViolation(where, e.what());
      }
      cfg.vehicle_params[name] = p;
    }
  }
  if (auto it = doc.find("idm_params"); it != doc.end()) {
    for (const auto& [name, body] : it->items()) {
      const std::string where = "/idm_params/" + name;
      if (!body.is_object()) throw InvariantViolation(where, "expected an object");
      detail::reject_unknown(body, {"u_max", "u_min", "v_max", "v_min", "delta", "s_0", "T"}, where);
      IDMParams p;
      detail::override_number(body, "u_max", p.u_max, where);
      detail::override_number(body, "u_min", p.u_min, where);
      detail::override_number(body, "v_max", p.v_max, where);
      detail::override_number(body, "v_min", p.v_min, where);
      detail::override_number(body, "delta", p.delta_exp, where);
      detail::override_number(body, "s_0", p.s_0, where);
      detail::override_number(body, "T", p.T, where);
      try {
        p.validate();
      } catch (const Error& e) {
        throw InvariantViolation(where, e.what());
      }
      cfg.idm_params[name] = p;
    }
  }
  if (auto it = doc.find("controller_gains"); it != doc.end()) {
    for (const auto& [name, body] : it->items()) {
      const std::string where = "/controller_gains/" + name;
      if (!body.is_object()) throw InvariantViolation(where, "expected an object");
      detail::reject_unknown(body, {"base", "k_a", "k_e", "k_y", "k_s", "kp", "ki", "kd", "k_ff", "integrator_limit"},
                             where);
      ControllerGains g{default_stanley_gains(cfg.scale), default_longitudinal_gains(cfg.scale)};
      detail::override_number(body, "k_a", g.stanley.k_a, where);
      detail::override_number(body, "k_e", g.stanley.k_e, where);
      detail::override_number(body, "k_y", g.stanley.k_y, where);
      detail::override_number(body, "k_s", g.stanley.k_s, where);
      detail::override_number(body, "kp", g.longitudinal.kp, where);
      detail::override_number(body, "ki", g.longitudinal.ki, where);
      detail::override_number(body, "kd", g.longitudinal.kd, where);
      detail::override_number(body, "k_ff", g.longitudinal.k_ff, where);
      detail::override_number(body, "integrator_limit", g.longitudinal.integrator_limit, where);
      if (!(g.stanley.k_s > 0.0)) throw InvariantViolation(where + "/k_s", "must be > 0");
      if (!(g.stanley.k_e >= 0.0)) throw InvariantViolation(where + "/k_e", "must be >= 0");
      if (!(g.longitudinal.integrator_limit > 0.0)) {
        throw InvariantViolation(where + "/integrator_limit", "must be > 0");
      }
      cfg.controller_gains[name] = g;
    }
  }

  // Vehicles.
  const json& vehicles = require(doc, "vehicles", "");
  if (!vehicles.is_array()) throw InvariantViolation("/vehicles", "expected an array");
  std::set<int> ids;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const std::string where = "/vehicles/" + std::to_string(i);
    const json& v = vehicles[i];
    detail::reject_unknown(
        v, {"id", "path", "s", "v", "vehicle_params", "idm_params", "controller_gains", "appearance"}, where);
    VehicleSpec spec;
    const json& id = require(v, "id", where);
    if (!id.is_number_integer() || id.get<std::int64_t>() < 0 || id.get<std::int64_t>() > 1'000'000) {
      throw InvariantViolation(where + "/id", "expected a non-negative integer");
    }
    spec.id = id.get<int>();
    if (!ids.insert(spec.id).second) {
      throw InvariantViolation(where + "/id", "duplicate vehicle id " + std::to_string(spec.id));
    }
    spec.path_id = detail::text(require(v, "path", where), where + "/path");
    find_path(spec.path_id, where + "/path");
    spec.s = number(require(v, "s", where), where + "/s");
    spec.v = number(require(v, "v", where), where + "/v");
    if (spec.v < 0.0) throw InvariantViolation(where + "/v", "must be >= 0");
    auto ref = [&](const char* key, const auto& table) {
      const std::string name = detail::text(require(v, key, where), where + "/" + key);
      if (!table.count(name)) throw UnknownReference(where + "/" + key, "no parameter set '" + name + "'");
      return name;
    };
    spec.vehicle_params = ref("vehicle_params", cfg.vehicle_params);
    spec.idm_params = ref("idm_params", cfg.idm_params);
    spec.controller_gains = ref("controller_gains", cfg.controller_gains);
    if (auto a = v.find("appearance"); a != v.end()) spec.appearance = detail::text(*a, where + "/appearance");
    const double len = cfg.path(spec.path_id).length();
    if (spec.s < 0.0 || spec.s > len) throw InvariantViolation(where + "/s", "outside the path");
    if (spec.v > cfg.idm_params[spec.idm_params].v_max) throw InvariantViolation(where + "/v", "above v_max");
    cfg.vehicles.push_back(spec);
  }

  // Yield rules.
  if (auto it = doc.find("yield_rules"); it != doc.end()) {
    if (!it->is_array()) throw InvariantViolation("/yield_rules", "expected an array");
    const MergeMap merges = cfg.merge_map();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string where = "/yield_rules/" + std::to_string(i);
      const json& r = (*it)[i];
      detail::reject_unknown(r, {"yield_path", "priority_path", "yield_position", "conflict_window"}, where);
      YieldRule rule;
      rule.yield_path = detail::text(require(r, "yield_path", where), where + "/yield_path");
      rule.priority_path = detail::text(require(r, "priority_path", where), where + "/priority_path");
      find_path(rule.yield_path, where + "/yield_path");
      find_path(rule.priority_path, where + "/priority_path");
      rule.yield_position = number(require(r, "yield_position", where), where + "/yield_position");
      const auto merge = merges.shared_from(rule.yield_path, rule.priority_path);
      if (!merge) throw UnknownReference(where, "the two paths do not merge");
      if (auto w = r.find("conflict_window"); w != r.end()) {
        if (!w->is_array() || w->size() != 2) throw InvariantViolation(where + "/conflict_window", "expected [lo, hi]");
        rule.conflict_window = {number((*w)[0], where + "/conflict_window/0"),
                                number((*w)[1], where + "/conflict_window/1")};
      } else {
        double length = 0.0;
        for (const auto& v : cfg.vehicles) {
          if (v.path_id == rule.priority_path) length = std::max(length, cfg.vehicle_params[v.vehicle_params].length);
        }
        if (length == 0.0) length = default_params(cfg.scale).length;
        rule.conflict_window = default_conflict_window(*merge, length);
      }
      try {
        rule.validate(*merge);
      } catch (const Error& e) {
        throw InvariantViolation(where, e.what());
      }
      cfg.yield_rules.push_back(rule);
    }
  }
  return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError(file.string(), "cannot open scenario file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), file.parent_path());
}

}  // namespace cosim::harness

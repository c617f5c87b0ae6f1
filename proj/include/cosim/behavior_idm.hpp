#pragma once

// Longitudinal planning along paths: double-integrator states, the
// intelligent driver model, leader resolution across merging paths and the
// virtual stopped vehicle that makes one entry yield to another.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cosim/controller_stack.hpp"
#include "cosim/error.hpp"
#include "cosim/road_network.hpp"

namespace cosim {

inline constexpr double kDefaultPlannerDt = 0.1;

/// Longitudinal plan state; p is the front bumper in the merge-aligned frame.
struct PlannerState {
  int vehicle_id = 0;
  std::string path_id;
  double p = 0.0;
  double v = 0.0;
  double vehicle_length = 0.0;

  friend bool operator==(const PlannerState&, const PlannerState&) = default;
};

struct IDMParams {
  double u_max = 0.73;    // m/s^2, > 0
  double u_min = -1.67;   // m/s^2, signed, < 0
  double v_max = 30.0;    // m/s
  double v_min = 0.0;     // m/s
  double delta_exp = 4.0;
  double s_0 = 2.0;       // m
  double T = 1.6;         // s

  void validate() const {
    if (!(u_min < 0.0 && u_max > 0.0)) throw OutOfRange("IDM needs u_min < 0 < u_max");
    if (!(v_min >= 0.0 && v_min < v_max)) throw OutOfRange("IDM needs 0 <= v_min < v_max");
    if (!(delta_exp > 0.0)) throw OutOfRange("IDM exponent must be > 0");
    if (!(s_0 > 0.0)) throw OutOfRange("IDM s_0 must be > 0");
    if (!(T >= 0.0)) throw OutOfRange("IDM time headway must be >= 0");
  }

  friend bool operator==(const IDMParams&, const IDMParams&) = default;
};

/// Raised when a follower's bumper-to-bumper gap is not positive, i.e. the
/// two vehicles already overlap.
class NonPositiveGap : public Error {
 public:
  NonPositiveGap(int follower, std::optional<int> leader, double gap)
      : Error("non-positive gap " + std::to_string(gap) + " m behind vehicle " +
              (leader ? std::to_string(*leader) : std::string("<virtual>")) + " for vehicle " +
              std::to_string(follower)),
        follower_(follower),
        leader_(leader),
        gap_(gap) {}
  int follower() const { return follower_; }
  std::optional<int> leader() const { return leader_; }
  double gap() const { return gap_; }

 private:
  int follower_;
  std::optional<int> leader_;
  double gap_;
};

/// Desired dynamic headway s*.
inline double idm_desired_gap(double v, double dv, const IDMParams& params) {
  const double braking = std::sqrt(params.u_max * std::abs(params.u_min));
  return params.s_0 + std::max(0.0, v * params.T + v * dv / (2.0 * braking));
}

/// IDM acceleration. dv is follower speed minus leader speed; pass an
/// infinite gap for a free road.
inline double idm_accel(double v, double gap, double dv, const IDMParams& params) {
  if (!std::isfinite(v) || std::isnan(gap) || !std::isfinite(dv)) {
    throw NonFiniteInput("idm_accel received a non-finite value");
  }
  if (!(gap > 0.0)) throw NonPositiveGap(-1, std::nullopt, gap);
  if (v < 0.0) throw OutOfRange("idm_accel needs v >= 0");
  const double free_term = std::pow(v / params.v_max, params.delta_exp);
  const double interaction = idm_desired_gap(v, dv, params) / gap;
  const double u = params.u_max * (1.0 - free_term - interaction * interaction);
  return std::clamp(u, params.u_min, params.u_max);
}

struct VirtualVehicle {
  std::string path_id;
  double p = 0.0;
  double v = 0.0;
  bool active = false;

  friend bool operator==(const VirtualVehicle&, const VirtualVehicle&) = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Vehicles on yield_path stop behind a virtual vehicle at yield_position
/// while any priority_path vehicle has its front bumper inside
/// conflict_window. Positions are merge-aligned.
struct YieldRule {
  std::string yield_path;
  std::string priority_path;
  double yield_position = 0.0;
  Interval conflict_window;

  void validate(std::optional<double> merge_position = std::nullopt) const {
    if (!(conflict_window.lo < conflict_window.hi)) throw OutOfRange("yield conflict window is empty");
    if (merge_position && !(yield_position <= *merge_position)) {
      throw OutOfRange("yield position must be upstream of the merge point");
    }
  }
};

/// [merge - 3 lengths, merge + 1 length].
inline Interval default_conflict_window(double merge_position, double vehicle_length) {
  return {merge_position - 3.0 * vehicle_length, merge_position + vehicle_length};
}

/// Path pairs that share road downstream of a merge coordinate.
class MergeMap {
 public:
  void add(const std::string& a, const std::string& b, double merge_position) {
    entries_.push_back({a, b, merge_position});
  }

  /// Merge-aligned coordinate from which `a` and `b` share the road.
  std::optional<double> shared_from(const std::string& a, const std::string& b) const {
    for (const auto& e : entries_) {
      if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return e.position;
    }
    return std::nullopt;
  }

  bool empty() const { return entries_.empty(); }

 private:
  struct Entry {
    std::string a;
    std::string b;
    double position;
  };
  std::vector<Entry> entries_;
};

struct Leader {
  std::optional<int> vehicle_id;  // empty for a virtual vehicle
  double p = 0.0;
  double gap = 0.0;
  double dv = 0.0;
};

/// Nearest entity strictly ahead of `self`. Same-path vehicles are always
/// visible; other-path vehicles only once they are at or past the shared
/// merge coordinate; virtual vehicles only on their own path.
inline std::optional<Leader> find_predecessor(const PlannerState& self, std::span<const PlannerState> others,
                                              std::span<const VirtualVehicle> virtuals, const MergeMap& merges) {
  std::optional<Leader> best;
  std::optional<int> best_rank_id;
  auto consider = [&](double p, double v, double length, std::optional<int> id) {
    if (!best || p < best->p || (p == best->p && id && (!best_rank_id || *id < *best_rank_id))) {
      best = Leader{id, p, p - self.p - length, self.v - v};
      best_rank_id = id;
    }
  };
  for (const auto& other : others) {
    if (other.vehicle_id == self.vehicle_id) continue;
    const bool ahead = other.p > self.p || (other.p == self.p && other.vehicle_id < self.vehicle_id);
    if (!ahead) continue;
    if (other.path_id != self.path_id) {
      const auto shared = merges.shared_from(self.path_id, other.path_id);
      if (!shared || other.p < *shared) continue;
    }
    consider(other.p, other.v, other.vehicle_length, other.vehicle_id);
  }
  for (const auto& virt : virtuals) {
    if (!virt.active || virt.path_id != self.path_id || !(virt.p > self.p)) continue;
    consider(virt.p, virt.v, 0.0, std::nullopt);
  }
  return best;
}

inline VirtualVehicle update_yield(const YieldRule& rule, std::span<const PlannerState> others) {
  VirtualVehicle out;
  out.path_id = rule.yield_path;
  out.p = rule.yield_position;
  out.v = 0.0;
  out.active = std::any_of(others.begin(), others.end(), [&](const PlannerState& s) {
    return s.path_id == rule.priority_path && rule.conflict_window.contains(s.p);
  });
  return out;
}

/// Semi-implicit Euler on the double integrator with the speed box applied.
inline PlannerState plan_step(const PlannerState& self, double u, double dt, const IDMParams& params) {
  PlannerState next = self;
  next.v = std::clamp(self.v + u * dt, params.v_min, params.v_max);
  next.p = self.p + next.v * dt;
  return next;
}

/// True once the plan has run past the end of its path.
inline bool plan_complete(const PlannerState& self, const Path& path) {
  return path.from_aligned(self.p) > path.length();
}

/// Throws OutOfRange once the plan leaves the path (the completion signal).
inline Waypoint emit_waypoint(const PlannerState& self, const Path& path, double t) {
  const Pose2 pose = path.pose_at(path.from_aligned(self.p));
  return Waypoint{t, pose.position(), pose.yaw, self.v};
}

struct PlanResult {
  PlannerState next;
  double accel = 0.0;
  std::optional<Leader> leader;
};

/// One planner tick for every state in `snapshot`. All reads use the
/// snapshot; results come back in input order.
inline std::vector<PlanResult> plan_tick(std::span<const PlannerState> snapshot, std::span<const IDMParams> params,
                                         std::span<const VirtualVehicle> virtuals, const MergeMap& merges, double dt) {
  std::vector<PlanResult> out;
  out.reserve(snapshot.size());
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    const PlannerState& self = snapshot[i];
    PlanResult r;
    r.leader = find_predecessor(self, snapshot, virtuals, merges);
    const double gap = r.leader ? r.leader->gap : std::numeric_limits<double>::infinity();
    const double dv = r.leader ? r.leader->dv : 0.0;
    if (!(gap > 0.0)) throw NonPositiveGap(self.vehicle_id, r.leader->vehicle_id, gap);
    r.accel = idm_accel(self.v, gap, dv, params[i]);
    r.next = plan_step(self, r.accel, dt, params[i]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cosim

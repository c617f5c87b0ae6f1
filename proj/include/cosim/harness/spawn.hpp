#pragma once

// Initial placement of a scenario's vehicles with overlap resolution.

#include <vector>

#include "cosim/harness/scenario.hpp"

namespace cosim::harness {

class PathTooShort : public Error {
 public:
  using Error::Error;
};

struct Placement {
  int vehicle_id = 0;
  std::string path_id;
  double p = 0.0;       // merge-aligned front position
  double length = 0.0;
  double s_0 = 0.0;     // IDM standstill gap used when moving the vehicle back
};

namespace detail {

inline bool bodies_overlap(const Placement& a, const Placement& b) {
  return a.p - a.length < b.p && b.p - b.length < a.p;
}

}  // namespace detail

/// Places vehicles in listed order. A vehicle overlapping an already placed
/// vehicle on the same path is moved back to sit s_0 behind it, repeatedly,
/// until it is clear. Throws PathTooShort once a vehicle's front would leave
/// the start of its path; `path_start` gives that bound per vehicle.
inline std::vector<Placement> place_vehicles(std::vector<Placement> requested, const std::vector<double>& path_start) {
  std::vector<Placement> placed;
  placed.reserve(requested.size());
  for (std::size_t i = 0; i < requested.size(); ++i) {
    Placement cand = requested[i];
    for (bool moved = true; moved;) {
      moved = false;
      for (const auto& other : placed) {
        if (other.path_id == cand.path_id && detail::bodies_overlap(cand, other)) {
          cand.p = other.p - other.length - cand.s_0;
          moved = true;
        }
      }
      if (cand.p < path_start[i]) {
        throw PathTooShort("no room for vehicle " + std::to_string(cand.vehicle_id) + " on path " + cand.path_id);
      }
    }
    placed.push_back(cand);
  }
  return placed;
}

inline std::vector<Placement> spawn_vehicles(const ScenarioConfig& cfg) {
  std::vector<Placement> requested;
  std::vector<double> starts;
  for (const auto& v : cfg.vehicles) {
    const Path& path = cfg.path(v.path_id);
    requested.push_back({v.id, v.path_id, path.to_aligned(v.s), cfg.vehicle_params.at(v.vehicle_params).length,
                         cfg.idm_params.at(v.idm_params).s_0});
    starts.push_back(path.to_aligned(0.0));
  }
  return place_vehicles(std::move(requested), starts);
}

}  // namespace cosim::harness

#pragma once

// Playback of a recorded log: one group of pose reports and one console
// state frame per logged tick, paced by a speed factor.

#include <chrono>
#include <functional>
#include <map>
#include <thread>
#include <vector>

#include "cosim/bridge_protocol.hpp"
#include "cosim/harness/log.hpp"

namespace cosim::harness {

struct ReplayGroup {
  double t = 0.0;
  std::vector<protocol::TransformReport> transforms;
  protocol::StateFrame state;
};

/// Groups records by tick. Vehicles missing from a later tick are reported
/// as complete from then on.
inline std::vector<ReplayGroup> replay_groups(const std::vector<LogRecord>& records) {
  std::vector<ReplayGroup> out;
  std::map<int, LogRecord> last;
  std::size_t i = 0;
  while (i < records.size()) {
    ReplayGroup g;
    g.t = records[i].t;
    std::map<int, bool> present;
    for (; i < records.size() && records[i].t == g.t; ++i) {
      const LogRecord& r = records[i];
      protocol::TransformReport tr;
      tr.vehicle_id = r.vehicle_id;
      tr.t_stamp = r.t;
      tr.position = {r.x, r.y, 0.0};
      tr.rotation = protocol::yaw_to_quaternion(r.yaw);
      g.transforms.push_back(tr);
      last[r.vehicle_id] = r;
      present[r.vehicle_id] = true;
    }
    g.state.state = "running";
    g.state.clock = g.t;
    for (const auto& [id, r] : last) {
      g.state.vehicles.push_back({id, present.count(id) ? "driving" : "complete", r.t, r.p, r.x, r.y, r.yaw, r.v,
                                  r.u_d, r.steer, r.gas, r.brake, r.handbrake});
    }
    out.push_back(std::move(g));
  }
  if (!out.empty()) {
    out.back().state.state = "complete";
  }
  return out;
}

/// Emits every group at wall-clock offset t / speed from the start. Returns
/// the number of groups emitted; `stop` ends playback early.
inline std::size_t replay(const std::vector<LogRecord>& records, double speed,
                          const std::function<void(const ReplayGroup&)>& emit,
                          const std::function<bool()>& stop = {}) {
  if (!(speed > 0.0)) throw OutOfRange("replay speed must be > 0");
  const auto groups = replay_groups(records);
  if (groups.empty()) return 0;
  const auto start = std::chrono::steady_clock::now();
  const double t0 = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (stop && stop()) break;
    const std::chrono::duration<double> offset((g.t - t0) / speed);
    std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(offset));
    emit(g);
    ++n;
  }
  return n;
}

}  // namespace cosim::harness

#pragma once

// Post-run analysis of a log: filtered speed traces, stop positions and the
// discrete event sequence of a merge scenario.

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "cosim/harness/filters.hpp"
#include "cosim/harness/log.hpp"

namespace cosim::harness {

inline constexpr double kFilterWindow = 0.1;  // s

inline std::vector<const LogRecord*> vehicle_records(const std::vector<LogRecord>& records, int vehicle_id) {
  std::vector<const LogRecord*> out;
  for (const auto& r : records) {
    if (r.vehicle_id == vehicle_id) out.push_back(&r);
  }
  return out;
}

inline std::vector<Sample> filtered_speed(const std::vector<LogRecord>& records, int vehicle_id,
                                          double window = kFilterWindow) {
  std::vector<Sample> series;
  for (const auto* r : vehicle_records(records, vehicle_id)) series.push_back({r->t, r->v});
  if (series.empty()) return series;
  return moving_average(series, window);
}

struct Stop {
  double t = 0.0;
  double p = 0.0;
};

/// First tick at which the filtered speed falls below `threshold` after the
/// vehicle has been moving (filtered speed at least 10x the threshold),
/// restricted to positions below `before_p`.
inline std::optional<Stop> first_stop(const std::vector<LogRecord>& records, int vehicle_id, double threshold,
                                      double before_p = std::numeric_limits<double>::infinity(),
                                      double window = kFilterWindow) {
  const auto rows = vehicle_records(records, vehicle_id);
  const auto speed = filtered_speed(records, vehicle_id, window);
  bool moving = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (speed[i].value >= 10.0 * threshold) moving = true;
    if (moving && speed[i].value < threshold && rows[i]->p < before_p) return Stop{rows[i]->t, rows[i]->p};
  }
  return std::nullopt;
}

struct EventSequence {
  std::vector<int> queue_order;       // yielding-path vehicles by first stop time
  std::vector<int> merge_order;       // all vehicles by first crossing of the merge coordinate
  std::vector<int> completion_order;  // all vehicles by completion tick

  friend bool operator==(const EventSequence&, const EventSequence&) = default;
};

namespace detail {

inline std::vector<int> order_by_time(std::vector<std::pair<double, int>> events) {
  std::sort(events.begin(), events.end());
  std::vector<int> out;
  for (const auto& e : events) out.push_back(e.second);
  return out;
}

}  // namespace detail

inline EventSequence event_sequence(const std::vector<LogRecord>& records, const std::vector<int>& queue_vehicles,
                                    double merge_p, double stop_threshold,
                                    const std::map<int, std::int64_t>& completion_tick) {
  EventSequence seq;
  std::vector<std::pair<double, int>> queue, merge, done;
  for (int id : queue_vehicles) {
    if (auto s = first_stop(records, id, stop_threshold, merge_p)) queue.emplace_back(s->t, id);
  }
  std::map<int, bool> merged;
  for (const auto& r : records) {
    if (!merged[r.vehicle_id] && r.p >= merge_p) {
      merged[r.vehicle_id] = true;
      merge.emplace_back(r.t, r.vehicle_id);
    }
  }
  for (const auto& [id, tick] : completion_tick) done.emplace_back(static_cast<double>(tick), id);
  seq.queue_order = detail::order_by_time(std::move(queue));
  seq.merge_order = detail::order_by_time(std::move(merge));
  seq.completion_order = detail::order_by_time(std::move(done));
  return seq;
}

}  // namespace cosim::harness

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cosim/error.hpp"

namespace cosim::harness {

class EmptySeries : public Error {
 public:
  EmptySeries() : Error("moving average of an empty series") {}
};

struct Sample {
  double t = 0.0;
  double value = 0.0;
};

/// Centered moving average: each output is the mean of the samples whose
/// time lies within +-window/2 of the output time, truncated at the ends.
inline std::vector<Sample> moving_average(const std::vector<Sample>& series, double window) {
  if (series.empty()) throw EmptySeries();
  if (!(window > 0.0) || !std::isfinite(window)) throw OutOfRange("moving average window must be > 0");
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (!(series[i].t > series[i - 1].t)) throw OutOfRange("moving average needs strictly increasing t");
  }
  const double half = window / 2.0;
  // Tolerance so samples on a uniform grid at exactly +-half are included
  // despite rounding in the time stamps.
  const double slack = 1e-9 * std::max(1.0, half);
  std::vector<Sample> out(series.size());
  std::size_t lo = 0, hi = 0;  // window is [lo, hi)
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double t = series[i].t;
    while (hi < series.size() && series[hi].t - t <= half + slack) ++hi;
    while (t - series[lo].t > half + slack) ++lo;
    double sum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) sum += series[j].value;
    out[i] = {t, sum / static_cast<double>(hi - lo)};
  }
  return out;
}

}  // namespace cosim::harness

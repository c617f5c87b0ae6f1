#pragma once

// Planar single-lane road geometry built from line and arc segments, with
// arc-length parameterization, projection and merge-frame alignment.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cosim/error.hpp"

namespace cosim {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kContinuityTolerance = 1e-6;
inline constexpr double kMergeTolerance = 1e-3;
inline constexpr double kProjectionWindow = 2.0;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double k, Point2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }

/// Planar pose; yaw is kept in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(wrap_angle(yaw_)) {}

  Point2 position() const { return {x, y}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

class DiscontinuousPath : public Error {
 public:
  using Error::Error;
};

class DegenerateSegment : public Error {
 public:
  using Error::Error;
};

class MergePointNotOnPath : public Error {
 public:
  using Error::Error;
};

class PathFileError : public Error {
 public:
  PathFileError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct LineSegment {
  Point2 start;
  Point2 end;
};

/// Circular arc; sweep is signed, positive is counterclockwise.
struct ArcSegment {
  Point2 center;
  double radius = 1.0;
  double start_angle = 0.0;
  double sweep = 0.0;
};

using Segment = std::variant<LineSegment, ArcSegment>;

namespace detail {

struct LocalProjection {
  double s = 0.0;          // along the segment
  double distance = 0.0;
};

inline double segment_length(const Segment& seg) {
  return std::visit(
      [](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, LineSegment>) {
          return norm(g.end - g.start);
        } else {
          return g.radius * std::abs(g.sweep);
        }
      },
      seg);
}

inline Point2 segment_point(const Segment& seg, double s) {
  return std::visit(
      [s](const auto& g) -> Point2 {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, LineSegment>) {
          const Point2 d = g.end - g.start;
          const double len = norm(d);
          return g.start + (s / len) * d;
        } else {
          const double dir = g.sweep > 0 ? 1.0 : -1.0;
          const double theta = g.start_angle + dir * s / g.radius;
          return {g.center.x + g.radius * std::cos(theta), g.center.y + g.radius * std::sin(theta)};
        }
      },
      seg);
}

inline double segment_yaw(const Segment& seg, double s) {
  return std::visit(
      [s](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, LineSegment>) {
          const Point2 d = g.end - g.start;
          return wrap_angle(std::atan2(d.y, d.x));
        } else {
          const double dir = g.sweep > 0 ? 1.0 : -1.0;
          const double theta = g.start_angle + dir * s / g.radius;
          return wrap_angle(theta + dir * kPi / 2.0);
        }
      },
      seg);
}

inline double segment_curvature(const Segment& seg) {
  if (const auto* arc = std::get_if<ArcSegment>(&seg)) {
    return (arc->sweep > 0 ? 1.0 : -1.0) / arc->radius;
  }
  return 0.0;
}

inline LocalProjection segment_project(const Segment& seg, Point2 p) {
  return std::visit(
      [p](const auto& g) -> LocalProjection {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, LineSegment>) {
          const Point2 d = g.end - g.start;
          const double len = norm(d);
          const double t = std::clamp(dot(p - g.start, d) / len, 0.0, len);
          const Point2 foot = g.start + (t / len) * d;
          return {t, norm(p - foot)};
        } else {
          const double len = g.radius * std::abs(g.sweep);
          const Point2 rel = p - g.center;
          if (norm(rel) == 0.0) return {0.0, g.radius};
          const double dir = g.sweep > 0 ? 1.0 : -1.0;
          double u = dir * (std::atan2(rel.y, rel.x) - g.start_angle);
          u = std::fmod(u, 2.0 * kPi);
          if (u < 0) u += 2.0 * kPi;
          if (u * g.radius <= len) {
            return {u * g.radius, std::abs(norm(rel) - g.radius)};
          }
          const double d0 = norm(p - segment_point(g, 0.0));
          const double d1 = norm(p - segment_point(g, len));
          return d0 <= d1 ? LocalProjection{0.0, d0} : LocalProjection{len, d1};
        }
      },
      seg);
}

inline Point2 segment_start(const Segment& seg) { return segment_point(seg, 0.0); }
inline Point2 segment_end(const Segment& seg) { return segment_point(seg, segment_length(seg)); }

}  // namespace detail

/// Result of projecting a point onto a path.
struct PathProjection {
  double s = 0.0;
  double lateral_error = 0.0;  // positive when the point is left of the tangent
  double path_yaw = 0.0;
  double curvature = 0.0;      // signed, positive turns left
};

/// Ordered, C0-continuous chain of segments. Immutable once built; the merge
/// offset maps path arc length to the shared merge-aligned coordinate.
class Path {
 public:
  const std::string& id() const { return id_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<double>& cumulative_lengths() const { return cumulative_; }
  double length() const { return cumulative_.back(); }
  double merge_offset() const { return merge_offset_; }

  double to_aligned(double s) const { return s + merge_offset_; }
  double from_aligned(double p) const { return p - merge_offset_; }

  Path with_id(std::string id) const {
    Path copy = *this;
    copy.id_ = std::move(id);
    return copy;
  }
  Path with_merge_offset(double offset) const {
    Path copy = *this;
    copy.merge_offset_ = offset;
    return copy;
  }

  Pose2 pose_at(double s) const {
    if (!(s >= 0.0 && s <= length())) {
      throw OutOfRange("arc length " + std::to_string(s) + " outside [0, " +
                       std::to_string(length()) + "]");
    }
    const std::size_t i = segment_index(s);
    const double local = s - segment_begin(i);
    const Point2 p = detail::segment_point(segments_[i], local);
    return Pose2(p.x, p.y, detail::segment_yaw(segments_[i], local));
  }

  PathProjection project(Point2 point, std::optional<double> hint_s = std::nullopt) const {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    if (hint_s) {
      const double h = std::clamp(*hint_s, 0.0, length());
      lo = h - kProjectionWindow;
      hi = h + kProjectionWindow;
    }
    std::size_t best = 0;
    detail::LocalProjection best_local{0.0, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const double begin = segment_begin(i);
      if (begin > hi || cumulative_[i] < lo) continue;
      const auto local = detail::segment_project(segments_[i], point);
      if (local.distance < best_local.distance) {
        best = i;
        best_local = local;
      }
    }
    const Segment& seg = segments_[best];
    const Point2 foot = detail::segment_point(seg, best_local.s);
    const double yaw = detail::segment_yaw(seg, best_local.s);
    const Point2 tangent{std::cos(yaw), std::sin(yaw)};
    PathProjection out;
    out.s = std::clamp(segment_begin(best) + best_local.s, 0.0, length());
    out.lateral_error = cross(tangent, point - foot);
    out.path_yaw = yaw;
    out.curvature = detail::segment_curvature(seg);
    return out;
  }

 private:
  friend Path build_path(std::vector<Segment> segments, std::string id);

  double segment_begin(std::size_t i) const { return i == 0 ? 0.0 : cumulative_[i - 1]; }

  std::size_t segment_index(double s) const {
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), s);
    if (it == cumulative_.end()) return cumulative_.size() - 1;
    return static_cast<std::size_t>(it - cumulative_.begin());
  }

  std::string id_;
  std::vector<Segment> segments_;
  std::vector<double> cumulative_;
  double merge_offset_ = 0.0;
};

/// Validates continuity and precomputes cumulative arc lengths.
inline Path build_path(std::vector<Segment> segments, std::string id = {}) {
  if (segments.empty()) throw DegenerateSegment("path needs at least one segment");
  Path path;
  path.id_ = std::move(id);
  double total = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& seg = segments[i];
    if (const auto* arc = std::get_if<ArcSegment>(&seg)) {
      if (!(arc->radius > 0.0) || !std::isfinite(arc->radius)) {
        throw DegenerateSegment("segment " + std::to_string(i) + ": arc radius must be > 0");
      }
      if (arc->sweep == 0.0 || !(std::abs(arc->sweep) <= 2.0 * kPi)) {
        throw DegenerateSegment("segment " + std::to_string(i) + ": arc sweep must be nonzero and within 2*pi");
      }
    }
    const double len = detail::segment_length(seg);
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw DegenerateSegment("segment " + std::to_string(i) + " has zero length");
    }
    if (i > 0) {
      const double gap = norm(detail::segment_start(seg) - detail::segment_end(segments[i - 1]));
      if (gap > kContinuityTolerance) {
        throw DiscontinuousPath("gap of " + std::to_string(gap) + " m between segments " +
                                std::to_string(i - 1) + " and " + std::to_string(i));
      }
    }
    total += len;
    path.cumulative_.push_back(total);
  }
  path.segments_ = std::move(segments);
  return path;
}

/// Sets merge offsets so the merge point has the same aligned coordinate on
/// both paths. The shared coordinate defaults to the merge arc length on `a`.
inline std::pair<Path, Path> align_to_merge(const Path& a, const Path& b, Point2 merge_point,
                                            std::optional<double> aligned_coordinate = std::nullopt) {
  auto locate = [&](const Path& path) {
    const PathProjection proj = path.project(merge_point);
    const Point2 foot = path.pose_at(proj.s).position();
    if (norm(foot - merge_point) > kMergeTolerance) {
      throw MergePointNotOnPath("merge point is " + std::to_string(norm(foot - merge_point)) +
                                " m from path '" + path.id() + "'");
    }
    return proj.s;
  };
  const double sa = locate(a);
  const double sb = locate(b);
  const double anchor = aligned_coordinate.value_or(sa);
  return {a.with_merge_offset(anchor - sa), b.with_merge_offset(anchor - sb)};
}

/// Parses the text path format: one `LINE x0 y0 x1 y1` or
/// `ARC cx cy r theta0 sweep` per line, `#` starts a comment.
inline Path parse_path(std::istream& in, std::string id = {}) {
  std::vector<Segment> segments;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string kind;
    if (!(ls >> kind)) continue;
    auto read = [&](int n) {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (auto& x : v) {
        if (!(ls >> x)) throw PathFileError(line_no, kind + " expects " + std::to_string(n) + " numbers");
      }
      std::string extra;
      if (ls >> extra) throw PathFileError(line_no, "unexpected token '" + extra + "'");
      for (double x : v) {
        if (!std::isfinite(x)) throw PathFileError(line_no, "non-finite number");
      }
      return v;
    };
    if (kind == "LINE") {
      const auto v = read(4);
      segments.emplace_back(LineSegment{{v[0], v[1]}, {v[2], v[3]}});
    } else if (kind == "ARC") {
      const auto v = read(5);
      segments.emplace_back(ArcSegment{{v[0], v[1]}, v[2], v[3], v[4]});
    } else {
      throw PathFileError(line_no, "unknown segment kind '" + kind + "'");
    }
  }
  if (segments.empty()) throw PathFileError(line_no, "no segments");
  try {
    return build_path(std::move(segments), std::move(id));
  } catch (const Error& e) {
    throw PathFileError(line_no, e.what());
  }
}

inline Path load_path(const std::string& file, std::string id = {}) {
  std::ifstream in(file);
  if (!in) throw PathFileError(0, "cannot open " + file);
  return parse_path(in, std::move(id));
}

}  // namespace cosim

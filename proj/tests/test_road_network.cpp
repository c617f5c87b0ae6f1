#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cosim/road_network.hpp"

using namespace cosim;

namespace {

Path quarter_arc() { return build_path({ArcSegment{{0, 0}, 1.0, 0.0, kPi / 2}}); }

Path mixed_path() {
  return build_path({LineSegment{{0, 0}, {2, 0}}, ArcSegment{{2, 1}, 1.0, -kPi / 2, kPi},
                     LineSegment{{2, 2}, {0, 2}}, ArcSegment{{0, 2.5}, 0.5, -kPi / 2, -kPi / 2}});
}

// Brute-force nearest point over a fine arc-length grid.
std::pair<double, double> brute_project(const Path& path, Point2 p, double step) {
  double best_s = 0.0, best_d = std::numeric_limits<double>::infinity();
  for (double s = 0.0; s <= path.length(); s += step) {
    const double d = norm(path.pose_at(s).position() - p);
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  return {best_s, best_d};
}

}  // namespace

TEST(BuildPath, LineLength) {
  EXPECT_EQ(build_path({LineSegment{{0, 0}, {3, 0}}}).length(), 3.0);
}

TEST(BuildPath, ArcLength) { EXPECT_EQ(quarter_arc().length(), kPi / 2); }

TEST(BuildPath, GapIsDiscontinuous) {
  EXPECT_THROW(build_path({LineSegment{{0, 0}, {1, 0}}, LineSegment{{2, 0}, {3, 0}}}), DiscontinuousPath);
}

TEST(BuildPath, JitterWithinToleranceAccepted) {
  EXPECT_NO_THROW(build_path({LineSegment{{0, 0}, {1, 0}}, LineSegment{{1 + 5e-7, 0}, {3, 0}}}));
}

TEST(BuildPath, DegenerateSegments) {
  EXPECT_THROW(build_path({}), DegenerateSegment);
  EXPECT_THROW(build_path({LineSegment{{1, 1}, {1, 1}}}), DegenerateSegment);
  EXPECT_THROW(build_path({ArcSegment{{0, 0}, 0.0, 0.0, 1.0}}), DegenerateSegment);
  EXPECT_THROW(build_path({ArcSegment{{0, 0}, 1.0, 0.0, 0.0}}), DegenerateSegment);
}

TEST(BuildPath, LengthIsExactSumOfSegments) {
  const Path p = mixed_path();
  EXPECT_EQ(p.length(), 2.0 + kPi + 2.0 + 0.5 * (kPi / 2));
}

TEST(PoseAt, LineMidpoint) {
  const Path p = build_path({LineSegment{{0, 0}, {2, 0}}});
  EXPECT_EQ(p.pose_at(1.0), Pose2(1, 0, 0));
}

TEST(PoseAt, ArcEndMatchesIntegratedTangent) {
  const Path p = quarter_arc();
  const Pose2 end = p.pose_at(kPi / 2);
  // Independent oracle: integrate the unit tangent (-sin t, cos t) from (1, 0).
  const int n = 200000;
  const double h = (kPi / 2) / n;
  double x = 1.0, y = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) * h;
    x += -std::sin(t) * h;
    y += std::cos(t) * h;
  }
  EXPECT_NEAR(end.x, x, 1e-9);
  EXPECT_NEAR(end.y, y, 1e-9);
  EXPECT_NEAR(end.x, 0.0, 1e-12);
  EXPECT_NEAR(end.y, 1.0, 1e-12);
  EXPECT_NEAR(end.yaw, kPi, 1e-12);
}

TEST(PoseAt, EndpointAndOutOfRange) {
  const Path p = build_path({LineSegment{{0, 0}, {2, 0}}});
  EXPECT_EQ(p.pose_at(2.0).position(), (Point2{2, 0}));
  EXPECT_THROW(p.pose_at(-1e-9), OutOfRange);
  EXPECT_THROW(p.pose_at(2.0 + 1e-9), OutOfRange);
}

TEST(Project, LineFootAndSign) {
  const Path p = build_path({LineSegment{{0, 0}, {2, 0}}});
  const auto left = p.project({1, 0.5});
  EXPECT_DOUBLE_EQ(left.s, 1.0);
  EXPECT_DOUBLE_EQ(left.lateral_error, 0.5);
  EXPECT_DOUBLE_EQ(p.project({1, -0.5}).lateral_error, -0.5);
}

TEST(Project, ArcMatchesBruteForce) {
  const Path p = quarter_arc();
  const auto proj = p.project({1.5, 0});
  const auto [s, d] = brute_project(p, {1.5, 0}, 1e-4);
  EXPECT_NEAR(std::abs(proj.lateral_error), d, 1e-9);
  EXPECT_NEAR(std::abs(proj.lateral_error), 0.5, 1e-12);
  EXPECT_NEAR(proj.s, s, 1e-4);
}

TEST(Project, RandomPointsMatchBruteForce) {
  const Path p = mixed_path();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(-0.5, 3.5), uy(-0.5, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Point2 q{ux(rng), uy(rng)};
    const auto proj = p.project(q);
    const double d = norm(p.pose_at(proj.s).position() - q);
    const auto [bs, bd] = brute_project(p, q, 1e-3);
    EXPECT_LE(d, bd + 1e-9) << "point " << q.x << "," << q.y;
  }
}

TEST(Project, RoundTripOverWholePath) {
  const Path p = mixed_path();
  for (double s = 0.0; s <= p.length(); s += 0.001) {
    const auto proj = p.project(p.pose_at(s).position(), s);
    ASSERT_NEAR(proj.s, s, 1e-6);
    ASSERT_NEAR(proj.lateral_error, 0.0, 1e-6);
  }
}

TEST(Project, CurvatureBySegmentKind) {
  const Path p = mixed_path();
  EXPECT_EQ(p.project({1, 0.1}).curvature, 0.0);
  EXPECT_EQ(p.project({3.1, 1}).curvature, 1.0);
  EXPECT_EQ(p.project({1, 2.1}).curvature, 0.0);
  EXPECT_EQ(p.project(p.pose_at(p.length() - 0.1).position()).curvature, -2.0);
}

TEST(Project, HintAvoidsWrongBranch) {
  // A hairpin whose two legs are 0.2 m apart; the hint keeps the far leg out.
  const Path p = build_path({LineSegment{{0, 0}, {3, 0}}, ArcSegment{{3, 0.1}, 0.1, -kPi / 2, kPi},
                             LineSegment{{3, 0.2}, {0, 0.2}}});
  const Point2 q{1.0, 0.11};
  EXPECT_GT(p.project(q).s, 3.0);
  EXPECT_NEAR(p.project(q, 1.0).s, 1.0, 1e-12);
}

TEST(PoseAt, Continuity) {
  const Path p = mixed_path();
  const double r_min = 0.5;
  for (double eps : {1e-3, 1e-4, 1e-6}) {
    for (double s = 0.0; s + eps <= p.length(); s += 0.01) {
      const double d = norm(p.pose_at(s + eps).position() - p.pose_at(s).position());
      ASSERT_LE(d, eps * (1 + eps / r_min) + 1e-12);
    }
  }
}

TEST(AlignToMerge, OffsetsFromMergeArcLengths) {
  const Path a = build_path({LineSegment{{0, 0}, {5, 0}}}, "a");
  const Path b = build_path({LineSegment{{-1.9, 0}, {5, 0}}}, "b");
  const Point2 merge{2.1, 0};
  const auto [aa, bb] = align_to_merge(a, b, merge);
  EXPECT_DOUBLE_EQ(aa.merge_offset(), 0.0);
  EXPECT_DOUBLE_EQ(bb.merge_offset(), -1.9);
  EXPECT_DOUBLE_EQ(aa.to_aligned(2.1), 2.1);
  EXPECT_DOUBLE_EQ(bb.to_aligned(4.0), 2.1);
}

TEST(AlignToMerge, IdenticalPathsAndAnchor) {
  const Path a = mixed_path();
  const auto [x, y] = align_to_merge(a, a, a.pose_at(2.5).position());
  EXPECT_EQ(x.merge_offset(), 0.0);
  EXPECT_EQ(y.merge_offset(), 0.0);
  const auto [u, w] = align_to_merge(a, a, a.pose_at(2.5).position(), 4.0);
  EXPECT_NEAR(u.to_aligned(2.5), 4.0, 1e-12);
  EXPECT_NEAR(w.to_aligned(2.5), 4.0, 1e-12);
}

TEST(AlignToMerge, PointOffPath) {
  const Path a = build_path({LineSegment{{0, 0}, {5, 0}}}, "a");
  const Path b = build_path({LineSegment{{0, 1}, {5, 1}}}, "b");
  EXPECT_THROW(align_to_merge(a, b, {2, 0}), MergePointNotOnPath);
}

TEST(ParsePath, SegmentsAndComments) {
  std::istringstream in("# test\nLINE 0 0 1 0  # first\n\nARC 1 1 1 -1.5707963267948966 1.5707963267948966\n");
  const Path p = parse_path(in, "x");
  EXPECT_EQ(p.id(), "x");
  EXPECT_EQ(p.segments().size(), 2u);
  EXPECT_NEAR(p.length(), 1.0 + kPi / 2, 1e-15);
}

TEST(ParsePath, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_path(in);
    } catch (const PathFileError& e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("LINE 0 0 1 0\nCURVE 1 2\n"), 2);
  EXPECT_EQ(line_of("LINE 0 0 1\n"), 1);
  EXPECT_EQ(line_of("LINE 0 0 1 0 9\n"), 1);
  EXPECT_EQ(line_of("LINE 0 0 1 nan\n"), 1);
  EXPECT_EQ(line_of("# nothing\n"), 1);
  EXPECT_EQ(line_of("LINE 0 0 1 0\nLINE 2 0 3 0\n"), 2);
}

TEST(WrapAngle, Range) {
  EXPECT_EQ(wrap_angle(kPi), kPi);
  EXPECT_NEAR(wrap_angle(-kPi), kPi, 1e-15);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 10000; ++i) {
    const double w = wrap_angle(u(rng));
    ASSERT_GT(w, -kPi);
    ASSERT_LE(w, kPi);
  }
}

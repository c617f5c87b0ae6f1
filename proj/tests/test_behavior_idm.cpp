#include <gtest/gtest.h>

#include <random>

#include "cosim/behavior_idm.hpp"

using namespace cosim;

namespace {

IDMParams testbed() { return {0.25, -0.5, 0.5, 0.0, 4.0, 0.09, 0.6}; }

}  // namespace

TEST(IDM, ScalarExample) {
  const IDMParams p;  // 0.73, -1.67, 30, 0, 4, 2, 1.6
  const double s_star = 2.0 + 1.6 * 1.0 + 1.0 * 0.5 / (2.0 * std::sqrt(0.73 * 1.67));
  const double u = 0.73 * (1.0 - std::pow(1.0 / 30.0, 4) - (s_star / 10) * (s_star / 10));
  EXPECT_DOUBLE_EQ(idm_desired_gap(1.0, 0.5, p), s_star);
  EXPECT_NEAR(s_star, 3.8264, 5e-5);
  EXPECT_DOUBLE_EQ(idm_accel(1.0, 10.0, 0.5, p), u);
  EXPECT_NEAR(u, 0.62311, 1e-5);
}

TEST(IDM, Equilibria) {
  for (const IDMParams& p : {IDMParams{}, testbed()}) {
    EXPECT_LT(std::abs(idm_accel(p.v_max, std::numeric_limits<double>::infinity(), 0.0, p)), 1e-12);
    EXPECT_LT(std::abs(idm_accel(0.0, p.s_0, 0.0, p)), 1e-12);
  }
}

TEST(IDM, ClampsAndMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> v(0, 0.6), gap(1e-4, 5), dv(-0.6, 0.6);
  const IDMParams p = testbed();
  for (int i = 0; i < 200000; ++i) {
    const double vv = v(rng), g = gap(rng), d = dv(rng);
    const double u = idm_accel(vv, g, d, p);
    ASSERT_GE(u, p.u_min);
    ASSERT_LE(u, p.u_max);
    ASSERT_GE(idm_accel(vv, g * 1.1, d, p), u);
    ASSERT_LE(idm_accel(vv, g, d + 0.05, p), u);
  }
}

TEST(IDM, Errors) {
  const IDMParams p = testbed();
  EXPECT_THROW(idm_accel(0.1, 0.0, 0.0, p), NonPositiveGap);
  EXPECT_THROW(idm_accel(0.1, -1.0, 0.0, p), NonPositiveGap);
  EXPECT_THROW(idm_accel(std::nan(""), 1.0, 0.0, p), NonFiniteInput);
  EXPECT_THROW(idm_accel(-0.1, 1.0, 0.0, p), OutOfRange);
  IDMParams bad = p;
  bad.u_min = 0.1;
  EXPECT_THROW(bad.validate(), OutOfRange);
}

TEST(Predecessor, SamePathGap) {
  const std::vector<PlannerState> all{{1, "a", 0.0, 0.0, 0.18}, {2, "a", 2.0, 0.0, 0.18}};
  const auto l = find_predecessor(all[0], all, {}, MergeMap{});
  ASSERT_TRUE(l);
  EXPECT_EQ(*l->vehicle_id, 2);
  EXPECT_DOUBLE_EQ(l->gap, 1.82);
  EXPECT_FALSE(find_predecessor(all[1], all, {}, MergeMap{}));
}

TEST(Predecessor, VirtualVehicle) {
  const std::vector<PlannerState> all{{1, "a", 1.0, 0.3, 0.18}};
  const std::vector<VirtualVehicle> virt{{"a", 2.1, 0.0, true}};
  const auto l = find_predecessor(all[0], all, virt, MergeMap{});
  ASSERT_TRUE(l);
  EXPECT_FALSE(l->vehicle_id);
  EXPECT_DOUBLE_EQ(l->dv, 0.3);
  EXPECT_DOUBLE_EQ(l->gap, 1.1);
  const std::vector<VirtualVehicle> idle{{"a", 2.1, 0.0, false}};
  EXPECT_FALSE(find_predecessor(all[0], all, idle, MergeMap{}));
}

TEST(Predecessor, CrossPathVisibleOnlyPastMerge) {
  MergeMap merges;
  merges.add("a", "b", 2.0);
  std::vector<PlannerState> all{{1, "a", 1.0, 0.0, 0.18}, {2, "b", 1.9, 0.0, 0.18}};
  EXPECT_FALSE(find_predecessor(all[0], all, {}, merges));
  all[1].p = 2.0;
  const auto l = find_predecessor(all[0], all, {}, merges);
  ASSERT_TRUE(l);
  EXPECT_EQ(*l->vehicle_id, 2);
}

TEST(Yield, WindowClosed) {
  YieldRule rule{"a", "b", 2.1, {1.6, 2.3}};
  EXPECT_TRUE(update_yield(rule, std::vector<PlannerState>{{4, "b", 2.3, 0, 0.18}}).active);
  EXPECT_TRUE(update_yield(rule, std::vector<PlannerState>{{4, "b", 1.6, 0, 0.18}}).active);
  EXPECT_FALSE(update_yield(rule, std::vector<PlannerState>{{4, "b", 2.31, 0, 0.18}}).active);
  EXPECT_FALSE(update_yield(rule, std::vector<PlannerState>{{4, "a", 2.0, 0, 0.18}}).active);
  const auto v = update_yield(rule, std::vector<PlannerState>{{4, "b", 2.0, 0, 0.18}});
  EXPECT_EQ(v.v, 0.0);
  EXPECT_EQ(v.p, 2.1);
  EXPECT_EQ(default_conflict_window(2.28, 0.18), (Interval{2.28 - 0.54, 2.28 + 0.18}));
}

TEST(PlanStep, Examples) {
  const IDMParams p = testbed();
  const PlannerState s{1, "a", 1.0, 0.0, 0.18};
  EXPECT_EQ(plan_step(s, 0.0, 0.1, p), s);
  PlannerState fast = s;
  fast.v = p.v_max;
  const auto n = plan_step(fast, 0.2, 0.1, p);
  EXPECT_EQ(n.v, p.v_max);
  EXPECT_DOUBLE_EQ(n.p, 1.0 + p.v_max * 0.1);
  PlannerState slow = s;
  slow.v = 0.1;
  const auto m = plan_step(slow, 0.2, 0.1, p);
  EXPECT_DOUBLE_EQ(m.v, 0.12);
  EXPECT_DOUBLE_EQ(m.p, 1.012);
}

TEST(Waypoint, EmitAndComplete) {
  const Path path = build_path({LineSegment{{0, 0}, {1, 0}}, ArcSegment{{1, 1}, 1.0, -kPi / 2, kPi / 2}});
  const auto w0 = emit_waypoint({1, "a", 0.0, 0.0, 0.18}, path, 0.0);
  EXPECT_EQ(w0.position, (Point2{0, 0}));
  EXPECT_EQ(w0.speed, 0.0);
  const auto mid = emit_waypoint({1, "a", 1.5, 0.2, 0.18}, path, 0.3);
  EXPECT_EQ(mid.position, path.pose_at(1.5).position());
  EXPECT_EQ(mid.yaw, path.pose_at(1.5).yaw);
  const PlannerState past{1, "a", path.length() + 0.01, 0.2, 0.18};
  EXPECT_THROW(emit_waypoint(past, path, 1.0), OutOfRange);
  EXPECT_TRUE(plan_complete(past, path));
}

TEST(Platoon, HardBrakingLeaderNeverCollides) {
  const IDMParams p = testbed();
  std::vector<PlannerState> s;
  for (int i = 0; i < 6; ++i) {
    const double v = p.v_max;
    const double spacing = idm_desired_gap(v, 0, p) + 0.18;
    s.push_back({i + 1, "a", 10.0 - i * spacing, v, 0.18});
  }
  std::vector<IDMParams> params(6, p);
  for (int tick = 0; tick < 600; ++tick) {
    auto results = plan_tick(s, params, {}, MergeMap{}, 0.1);
    // Vehicle 1 ignores IDM and brakes at u_min until it stops.
    results[0].next = plan_step(s[0], p.u_min, 0.1, p);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = results[i].next;
    for (std::size_t i = 1; i < s.size(); ++i) ASSERT_GT(s[i - 1].p - 0.18 - s[i].p, 0.0) << "tick " << tick;
  }
}

TEST(YieldProperty, FrontStaysBehindYieldLine) {
  const IDMParams p = testbed();
  std::vector<PlannerState> s{{1, "a", 1.0, 0.5, 0.18}, {2, "b", 2.0, 0.0, 0.18}};
  YieldRule rule{"a", "b", 2.1, {1.5, 2.5}};
  std::vector<IDMParams> params(2, p);
  for (int tick = 0; tick < 200; ++tick) {
    const std::vector<VirtualVehicle> v{update_yield(rule, s)};
    ASSERT_TRUE(v[0].active);
    auto r = plan_tick(s, params, v, MergeMap{}, 0.1);
    s[0] = r[0].next;
    ASSERT_LE(s[0].p, rule.yield_position + p.s_0);
  }
}

TEST(PlanTick, Deterministic) {
  const IDMParams p = testbed();
  std::vector<PlannerState> s{{1, "a", 1.0, 0.1, 0.18}, {2, "a", 0.5, 0.3, 0.18}, {3, "a", 0.0, 0.2, 0.18}};
  std::vector<IDMParams> params(3, p);
  auto a = plan_tick(s, params, {}, MergeMap{}, 0.1);
  auto b = plan_tick(s, params, {}, MergeMap{}, 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].next, b[i].next);
    EXPECT_EQ(a[i].accel, b[i].accel);
  }
}

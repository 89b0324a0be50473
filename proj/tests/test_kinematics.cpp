#include "ipmc/kinematics.hpp"
#include "ipmc/scenario.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace ipmc;

TEST(Ackermann, Derivative) {
  const auto z = ackermann_derivative({0, 0, 1.2}, {0.0, 0.4}, 0.3);
  EXPECT_EQ(z[0], 0.0);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_EQ(z[2], 0.0);
  const auto s = ackermann_derivative({0, 0, 0}, {1.0, 0.0}, 0.3);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_EQ(s[2], 0.0);
  const auto t = ackermann_derivative({0, 0, 0}, {1.0, std::atan(0.3)}, 0.3);
  EXPECT_NEAR(t[2], 1.0, 1e-12);
  EXPECT_THROW(ackermann_derivative({}, {1.0, std::numbers::pi / 2}, 0.3), Error);
}

TEST(Ackermann, Propagate) {
  const RobotState s = propagate({0, 0, 0}, {1.0, 0.0}, 0.1428, 0.3);
  EXPECT_DOUBLE_EQ(s.a, 0.1428);
  EXPECT_EQ(s.e, 0.0);
  const RobotState p{1.0, -2.0, 0.7};
  EXPECT_EQ(propagate(p, {0.0, 0.3}, 0.1428, 0.3), p);
  RobotState r{};
  for (int i = 0; i < 7; ++i) r = propagate(r, {1.0, 0.0}, 0.1428, 0.3);
  EXPECT_NEAR(r.a, 0.9996, 1e-12);
}

TEST(Ackermann, HeadingWrap) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  Rng rng(1);
  RobotState s{};
  for (int i = 0; i < 2000; ++i) {
    s = propagate(s, {1.0, uniform(rng, -1.0, 1.0)}, 0.1428, 0.3);
    EXPECT_GT(s.omega, -std::numbers::pi);
    EXPECT_LE(s.omega, std::numbers::pi);
  }
}

namespace {

MpcSpec straight_spec() {
  MpcSpec spec;
  RobotState s{};
  for (int l = 0; l < 7; ++l) {
    s.a += spec.u_max.v * spec.dt;
    spec.waypoints.push_back(s);
  }
  return spec;
}

void expect_rollout_consistent(const TrajectoryPlan& plan, const MpcSpec& spec, const RobotState& s0) {
  ASSERT_EQ(plan.states.size(), plan.controls.size());
  RobotState s = s0;
  for (std::size_t l = 0; l < plan.controls.size(); ++l) {
    s = propagate(s, plan.controls[l], spec.dt, spec.wheelbase);
    EXPECT_EQ(plan.states[l], s);  // bit-for-bit
  }
}

}  // namespace

TEST(Mpc, StraightTracking) {
  const MpcSpec spec = straight_spec();
  const TrajectoryPlan plan = solve_mpc(spec, {});
  for (const auto& u : plan.controls) EXPECT_LE(std::abs(u.delta), 1e-3);
  const auto& end = plan.states.back();
  EXPECT_LE(std::hypot(end.a - spec.waypoints.back().a, end.e - spec.waypoints.back().e), 1e-2);
  expect_rollout_consistent(plan, spec, {});
}

TEST(Mpc, AlreadyAtTarget) {
  MpcSpec spec;
  const RobotState s0{1.0, 2.0, 0.5};
  spec.waypoints.assign(7, s0);
  const TrajectoryPlan plan = solve_mpc(spec, s0);
  EXPECT_NEAR(plan.tracking_cost, 0.0, 1e-12);
  for (const auto& u : plan.controls) EXPECT_NEAR(u.v, 0.0, 1e-6);
}

TEST(Mpc, BoundsAndMonotoneCost) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    MpcSpec spec;
    const RobotState s0{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -3, 3)};
    const double v = uniform(rng, 0.2, 0.9);
    const double k = uniform(rng, -0.8, 0.8);
    spec.waypoints = segment_waypoints(s0, v, k, 7, spec.dt, spec.wheelbase);
    for (auto& w : spec.waypoints) {
      w.a += uniform(rng, -0.05, 0.05);
      w.e += uniform(rng, -0.05, 0.05);
    }
    const TrajectoryPlan plan = solve_mpc(spec, s0);
    expect_rollout_consistent(plan, spec, s0);
    for (std::size_t l = 0; l < plan.controls.size(); ++l) {
      const auto& u = plan.controls[l];
      EXPECT_GE(u.v, -1.0 - 1e-12);
      EXPECT_LE(u.v, 1.0 + 1e-12);
      EXPECT_GE(u.delta, -1.0 - 1e-12);
      EXPECT_LE(u.delta, 1.0 + 1e-12);
      if (l > 0) {
        EXPECT_LE(std::abs(u.v - plan.controls[l - 1].v), 0.1 + 1e-9);
        EXPECT_LE(std::abs(u.delta - plan.controls[l - 1].delta), 0.05 + 1e-9);
      }
    }
    for (std::size_t i = 1; i < plan.cost_trace.size(); ++i) EXPECT_LE(plan.cost_trace[i], plan.cost_trace[i - 1]);
  }
}

TEST(Mpc, InfeasibleBounds) {
  MpcSpec spec = straight_spec();
  spec.u_min = {0.5, 0.0};
  spec.u_max = {0.2, 0.0};
  EXPECT_THROW(solve_mpc(spec, {}), Error);
}

TEST(Curvature, Collinear) {
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 8; ++i) pts.push_back({0.3 * i, 0.1 * i});
  EXPECT_NEAR(discrete_curvature(pts), 0.0, 1e-12);
}

TEST(Curvature, Circles) {
  for (double radius : {2.0, 10.0}) {
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 7; ++i) {
      const double t = 0.07 * i;
      pts.push_back({radius * std::cos(t), radius * std::sin(t)});
    }
    EXPECT_NEAR(discrete_curvature(pts), 1.0 / radius, 0.02 / radius);
  }
}

TEST(Curvature, RigidMotionInvariance) {
  std::vector<std::array<double, 2>> pts, moved;
  Rng rng(2);
  for (int i = 0; i < 9; ++i) pts.push_back({i + uniform(rng, 0.0, 0.3), std::sin(0.4 * i)});
  const double rot = 1.1, tx = 5.0, ty = -3.0;
  for (const auto& p : pts)
    moved.push_back({std::cos(rot) * p[0] - std::sin(rot) * p[1] + tx, std::sin(rot) * p[0] + std::cos(rot) * p[1] + ty});
  const double a = discrete_curvature(pts);
  EXPECT_NEAR(discrete_curvature(moved), a, 1e-9 * a);
}

TEST(Curvature, Degenerate) {
  std::vector<std::array<double, 2>> pts{{0, 0}, {0, 0}, {1, 1}};
  EXPECT_THROW(discrete_curvature(pts), Error);
}

TEST(MotionVector, Thresholding) {
  const auto psi = motion_vector({0.0, 0.5, 0.07, 0.0699}, 0.07);
  EXPECT_EQ(psi, (std::vector<int>{0, 1, 1, 0}));
}

#pragma once

// Ackermann kinematics, waypoint-tracking MPC, discrete curvature and the
// motion flag vector.

#include "ipmc/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace ipmc {

struct RobotState {
  double a = 0.0;      // m
  double e = 0.0;      // m
  double omega = 0.0;  // rad, in (-pi, pi]

  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct ControlInput {
  double v = 0.0;      // m/s
  double delta = 0.0;  // steering angle, rad

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double x) {
  if (x > -std::numbers::pi && x <= std::numbers::pi) return x;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(x + std::numbers::pi, two_pi);
  if (y <= 0.0) y += two_pi;
  return y - std::numbers::pi;
}

/// Time derivative of the Ackermann state (da, de, domega).
inline std::array<double, 3> ackermann_derivative(const RobotState& s, const ControlInput& u, double wheelbase) {
  if (!(wheelbase > 0.0)) throw Error(ErrorKind::invalid_argument, "wheelbase must be positive");
  if (std::abs(u.delta) >= std::numbers::pi / 2.0) throw Error(ErrorKind::invalid_argument, "steering singularity");
  return {u.v * std::cos(s.omega), u.v * std::sin(s.omega), u.v * std::tan(u.delta) / wheelbase};
}

/// One explicit-Euler step of the Ackermann model.
inline RobotState propagate(const RobotState& s, const ControlInput& u, double dt, double wheelbase) {
  const auto f = ackermann_derivative(s, u, wheelbase);
  return {s.a + f[0] * dt, s.e + f[1] * dt, wrap_angle(s.omega + f[2] * dt)};
}

/// Tracking problem over one sub-duration.
struct MpcSpec {
  std::vector<RobotState> waypoints;  // one target per predicted state
  ControlInput u_min{-1.0, -1.0};
  ControlInput u_max{1.0, 1.0};
  ControlInput beta_min{-0.1, -0.05};  // per-step control change
  ControlInput beta_max{0.1, 0.05};
  double dt = 0.1428;
  double wheelbase = 0.3;
  int max_iterations = 100;
  double convergence_tol = 1e-12;
  /// Control applied just before the horizon; when set, the first step is
  /// rate-limited against it.
  std::optional<ControlInput> previous_control;
  CurvatureAggregation aggregation = CurvatureAggregation::mean;

  int horizon() const { return static_cast<int>(waypoints.size()); }
};

struct TrajectoryPlan {
  std::vector<RobotState> states;      // states[l] = propagate(states[l-1] or s_init, controls[l])
  std::vector<ControlInput> controls;
  double tracking_cost = 0.0;          // m^2 (+ rad^2 on heading)
  double curvature = 0.0;              // 1/m
  std::vector<double> cost_trace;      // accepted cost per iteration, non-increasing
  int iterations = 0;
};

namespace detail {

struct Interval {
  double lo;
  double hi;
};

/// Per-step feasible intervals for one control channel under box and
/// per-step change bounds, accounting for reachability in both directions.
inline std::vector<Interval> control_corridor(int n, double lo, double hi, double bmin, double bmax,
                                              std::optional<double> prev) {
  std::vector<Interval> f(n);
  for (int l = 0; l < n; ++l) {
    Interval r{lo, hi};
    if (l == 0 && prev) r = {std::max(lo, *prev + bmin), std::min(hi, *prev + bmax)};
    if (l > 0) r = {std::max(lo, f[l - 1].lo + bmin), std::min(hi, f[l - 1].hi + bmax)};
    f[l] = r;
    if (r.lo > r.hi) throw Error(ErrorKind::invalid_argument, "infeasible control bounds");
  }
  for (int l = n - 2; l >= 0; --l) {
    f[l].lo = std::max(f[l].lo, f[l + 1].lo - bmax);
    f[l].hi = std::min(f[l].hi, f[l + 1].hi - bmin);
    if (f[l].lo > f[l].hi) throw Error(ErrorKind::invalid_argument, "infeasible control bounds");
  }
  return f;
}

/// Euclidean projection onto the box/rate polytope (Dykstra over the box,
/// even-pair slabs and odd-pair slabs), followed by an exact forward repair
/// so the result is feasible to the last bit.
inline void project_channel(std::vector<double>& x, const std::vector<Interval>& corridor, double bmin,
                            double bmax) {
  const int n = static_cast<int>(x.size());
  const std::vector<double> y = x;
  std::vector<double> p_box(n, 0.0), p_even(n, 0.0), p_odd(n, 0.0);
  auto slab = [&](std::vector<double>& z, int start) {
    for (int i = start; i + 1 < n; i += 2) {
      const double diff = z[i + 1] - z[i];
      const double target = std::clamp(diff, bmin, bmax);
      const double corr = 0.5 * (diff - target);
      z[i] += corr;
      z[i + 1] -= corr;
    }
  };
  std::vector<double> z = y;
  for (int it = 0; it < 60; ++it) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = z[i] + p_box[i];
    std::vector<double> zb(n);
    for (int i = 0; i < n; ++i) zb[i] = std::clamp(w[i], corridor[i].lo, corridor[i].hi);
    for (int i = 0; i < n; ++i) p_box[i] = w[i] - zb[i];

    for (int i = 0; i < n; ++i) w[i] = zb[i] + p_even[i];
    std::vector<double> ze = w;
    slab(ze, 0);
    for (int i = 0; i < n; ++i) p_even[i] = w[i] - ze[i];

    for (int i = 0; i < n; ++i) w[i] = ze[i] + p_odd[i];
    std::vector<double> zo = w;
    slab(zo, 1);
    for (int i = 0; i < n; ++i) p_odd[i] = w[i] - zo[i];
    z = zo;
  }
  for (int i = 0; i < n; ++i) {
    Interval r = corridor[i];
    if (i > 0) r = {std::max(r.lo, x[i - 1] + bmin), std::min(r.hi, x[i - 1] + bmax)};
    x[i] = std::clamp(z[i], r.lo, std::max(r.lo, r.hi));
  }
}

inline std::vector<RobotState> rollout(const RobotState& s0, const std::vector<ControlInput>& u, double dt,
                                       double wheelbase) {
  std::vector<RobotState> out;
  out.reserve(u.size());
  RobotState s = s0;
  for (const auto& ui : u) {
    s = propagate(s, ui, dt, wheelbase);
    out.push_back(s);
  }
  return out;
}

inline double tracking_cost(const std::vector<RobotState>& states, const std::vector<RobotState>& targets) {
  double cost = 0.0;
  for (std::size_t l = 0; l < states.size(); ++l) {
    const double da = states[l].a - targets[l].a;
    const double de = states[l].e - targets[l].e;
    const double dw = wrap_angle(states[l].omega - targets[l].omega);
    cost += da * da + de * de + dw * dw;
  }
  return cost;
}

}  // namespace detail

/// Curvature estimate of a planar polyline: per-point curvature from central
/// differences in arc length, aggregated over interior points.
inline double discrete_curvature(const std::vector<std::array<double, 2>>& pts,
                                 CurvatureAggregation agg = CurvatureAggregation::mean) {
  const std::size_t n = pts.size();
  if (n < 3) throw Error(ErrorKind::invalid_argument, "discrete_curvature needs at least 3 points");
  std::vector<double> seg(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    seg[i] = std::hypot(pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1]);
    if (!(seg[i] > 0.0)) throw Error(ErrorKind::invalid_argument, "degenerate path");
  }
  double sum = 0.0;
  double peak = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h1 = seg[i - 1];
    const double h2 = seg[i];
    const double denom = h1 * h2 * (h1 + h2);
    double d1[2], d2[2];
    for (int k = 0; k < 2; ++k) {
      const double xm = pts[i - 1][k], x0 = pts[i][k], xp = pts[i + 1][k];
      d1[k] = (h1 * h1 * xp - h2 * h2 * xm + (h2 * h2 - h1 * h1) * x0) / denom;
      d2[k] = 2.0 * (h1 * xp - (h1 + h2) * x0 + h2 * xm) / denom;
    }
    const double speed2 = d1[0] * d1[0] + d1[1] * d1[1];
    const double kappa = std::abs(d1[0] * d2[1] - d1[1] * d2[0]) / std::pow(speed2, 1.5);
    sum += kappa;
    peak = std::max(peak, kappa);
  }
  return agg == CurvatureAggregation::max ? peak : sum / static_cast<double>(n - 2);
}

/// Curvature of predicted states; stationary repeats are dropped and a path
/// with fewer than three distinct points has zero curvature.
inline double path_curvature(const std::vector<RobotState>& states, CurvatureAggregation agg) {
  std::vector<std::array<double, 2>> pts;
  for (const auto& s : states) {
    if (!pts.empty() && std::hypot(s.a - pts.back()[0], s.e - pts.back()[1]) < 1e-9) continue;
    pts.push_back({s.a, s.e});
  }
  if (pts.size() < 3) return 0.0;
  return discrete_curvature(pts, agg);
}

/// Waypoint tracking by sequential linearization of the rollout
/// (Levenberg-Marquardt step) with projection onto the control constraints.
/// Only cost-decreasing steps are accepted, so the cost trace is monotone.
inline TrajectoryPlan solve_mpc(const MpcSpec& spec, const RobotState& s_init) {
  const int n = spec.horizon();
  if (n < 2) throw Error(ErrorKind::invalid_argument, "MPC horizon must be at least 2");
  if (spec.u_min.v > spec.u_max.v || spec.u_min.delta > spec.u_max.delta ||
      spec.beta_min.v > spec.beta_max.v || spec.beta_min.delta > spec.beta_max.delta)
    throw Error(ErrorKind::invalid_argument, "infeasible control bounds");
  if (!std::isfinite(s_init.a) || !std::isfinite(s_init.e) || !std::isfinite(s_init.omega))
    throw Error(ErrorKind::invalid_argument, "initial state must be finite");
  if (std::max(std::abs(spec.u_min.delta), std::abs(spec.u_max.delta)) >= std::numbers::pi / 2.0)
    throw Error(ErrorKind::invalid_argument, "steering singularity");

  const auto prev_v = spec.previous_control ? std::optional<double>(spec.previous_control->v) : std::nullopt;
  const auto prev_d = spec.previous_control ? std::optional<double>(spec.previous_control->delta) : std::nullopt;
  const auto corr_v = detail::control_corridor(n, spec.u_min.v, spec.u_max.v, spec.beta_min.v, spec.beta_max.v, prev_v);
  const auto corr_d = detail::control_corridor(n, spec.u_min.delta, spec.u_max.delta, spec.beta_min.delta,
                                               spec.beta_max.delta, prev_d);

  auto project = [&](std::vector<ControlInput>& u) {
    std::vector<double> v(n), d(n);
    for (int l = 0; l < n; ++l) {
      v[l] = u[l].v;
      d[l] = u[l].delta;
    }
    detail::project_channel(v, corr_v, spec.beta_min.v, spec.beta_max.v);
    detail::project_channel(d, corr_d, spec.beta_min.delta, spec.beta_max.delta);
    for (int l = 0; l < n; ++l) u[l] = {v[l], d[l]};
  };

  std::vector<ControlInput> u(n, spec.previous_control.value_or(ControlInput{}));
  project(u);
  auto states = detail::rollout(s_init, u, spec.dt, spec.wheelbase);
  double cost = detail::tracking_cost(states, spec.waypoints);
  if (!std::isfinite(cost)) throw Error(ErrorKind::numerical, "divergence");

  TrajectoryPlan plan;
  plan.cost_trace.push_back(cost);
  double lambda = 1e-3;
  const double dt = spec.dt;
  const double wb = spec.wheelbase;

  bool converged = false;
  for (int iter = 0; iter < spec.max_iterations && cost > 0.0 && !converged; ++iter) {
    // residuals and Jacobian of states w.r.t. controls
    Eigen::VectorXd r(3 * n);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * n, 2 * n);
    Eigen::MatrixXd sens = Eigen::MatrixXd::Zero(3, 2 * n);  // d(pre-state)/du
    RobotState pre = s_init;
    for (int l = 0; l < n; ++l) {
      const double v = u[l].v, dl = u[l].delta, w = pre.omega;
      Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
      a(0, 2) = -v * std::sin(w) * dt;
      a(1, 2) = v * std::cos(w) * dt;
      Eigen::Matrix<double, 3, 2> b;
      const double cd = std::cos(dl);
      b << std::cos(w) * dt, 0.0, std::sin(w) * dt, 0.0, std::tan(dl) / wb * dt, v / (wb * cd * cd) * dt;
      sens = a * sens;
      sens.block<3, 2>(0, 2 * l) += b;
      jac.block(3 * l, 0, 3, 2 * n) = sens;
      const auto& s = states[l];
      r(3 * l) = s.a - spec.waypoints[l].a;
      r(3 * l + 1) = s.e - spec.waypoints[l].e;
      r(3 * l + 2) = wrap_angle(s.omega - spec.waypoints[l].omega);
      pre = s;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Eigen::MatrixXd sys = jtj;
      sys.diagonal().array() += lambda * (1.0 + jtj.diagonal().array());
      const Eigen::VectorXd step = sys.ldlt().solve(-jtr);
      std::vector<ControlInput> cand = u;
      for (int l = 0; l < n; ++l) {
        cand[l].v += step(2 * l);
        cand[l].delta += step(2 * l + 1);
      }
      project(cand);
      auto cand_states = detail::rollout(s_init, cand, dt, wb);
      const double cand_cost = detail::tracking_cost(cand_states, spec.waypoints);
      if (!std::isfinite(cand_cost)) throw Error(ErrorKind::numerical, "divergence");
      if (cand_cost < cost) {
        const double improvement = cost - cand_cost;
        u = std::move(cand);
        states = std::move(cand_states);
        cost = cand_cost;
        plan.cost_trace.push_back(cost);
        lambda = std::max(lambda / 3.0, 1e-9);
        accepted = true;
        converged = improvement < spec.convergence_tol;
      } else {
        lambda *= 10.0;
      }
    }
    plan.iterations = iter + 1;
    if (!accepted) converged = true;
  }

  plan.controls = std::move(u);
  plan.states = std::move(states);
  plan.tracking_cost = cost;
  plan.curvature = path_curvature(plan.states, spec.aggregation);
  return plan;
}

/// psi_h = 1 iff theta_h >= threshold.
inline std::vector<int> motion_vector(const std::vector<double>& curvatures, double threshold) {
  if (!(threshold > 0.0)) throw Error(ErrorKind::invalid_argument, "curvature threshold must be positive");
  std::vector<int> psi;
  psi.reserve(curvatures.size());
  for (double th : curvatures) {
    if (!std::isfinite(th)) throw Error(ErrorKind::invalid_argument, "curvature must be finite");
    psi.push_back(th >= threshold ? 1 : 0);
  }
  return psi;
}

/// Plans each sub-duration from the end state of the previous one.
inline std::vector<TrajectoryPlan> plan_route(const std::vector<std::vector<RobotState>>& waypoints_per_h,
                                              const RobotState& start, const MpcSpec& base) {
  std::vector<TrajectoryPlan> plans;
  plans.reserve(waypoints_per_h.size());
  RobotState s = start;
  for (const auto& wps : waypoints_per_h) {
    MpcSpec spec = base;
    spec.waypoints = wps;
    plans.push_back(solve_mpc(spec, s));
    s = plans.back().states.back();
  }
  return plans;
}

}  // namespace ipmc

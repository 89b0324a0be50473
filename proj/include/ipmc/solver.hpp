#pragma once

// Min-max allocation of down-sampling, compression and power.
//
// Two independent solvers are provided for the log-transformed convex
// program: a generic log-barrier interior-point method over all 3MH + 1
// variables, and a bisection on the epigraph level that exploits the fact
// that both the objective and the rate constraint depend on d and c only
// through their product.

#include "ipmc/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace ipmc {

struct SolverOptions {
  double tol = 1e-6;        // on the epigraph value t = ln C0
  double feas_tol = 1e-8;   // relative constraint residual
  double barrier_init = 1.0;
  double barrier_growth = 10.0;
  int max_outer = 40;
  int max_newton = 200;
  double newton_tol = 1e-10;
};

/// Problem P for one scenario: features, config and the turn-tightened
/// lower bounds on d and c.
struct GpProblem {
  ScenarioFeatures features;
  SystemConfig cfg;
  Matrix q_floor;           // normalized SCI floored at cfg.sci_floor
  std::vector<double> d_lb;  // per sub-duration
  std::vector<double> c_lb;

  int num_modalities() const { return features.num_modalities(); }
  int num_subdurations() const { return features.num_subdurations(); }
  double budget_total() const { return cfg.power_budget * num_subdurations(); }
};

inline GpProblem make_problem(const ScenarioFeatures& features, const SystemConfig& cfg) {
  require_valid(cfg);
  check_features_against(features, cfg);
  GpProblem prob{features, cfg, features.sci_norm.cwiseMax(cfg.sci_floor), {}, {}};
  for (int psi : features.motion) {
    prob.d_lb.push_back(cfg.d_lower(psi));
    prob.c_lb.push_back(cfg.c_lower(psi));
  }
  return prob;
}

/// Exponent above which the power demand is treated as overflow.
inline constexpr double kMaxRateExponent = 1000.0;

/// Smallest power (W) meeting the rate demand d*c*Z bits in dt seconds.
inline double min_power(double d, double c, double volume, double gain, double bandwidth, double dt, double noise) {
  const double exponent = d * c * volume / (dt * bandwidth);
  if (exponent > kMaxRateExponent) throw Error(ErrorKind::numerical, "rate demand overflow");
  return noise / gain * std::expm1(exponent * std::numbers::ln2);
}

/// Bits deliverable in dt seconds at power p.
inline double rate_bits(double p, double gain, double bandwidth, double dt, double noise) {
  return dt * bandwidth * std::log2(1.0 + gain * p / noise);
}

inline double entry_min_power(const GpProblem& prob, int m, int h, double product) {
  const auto& cfg = prob.cfg;
  return min_power(product, 1.0, prob.features.volumes[m], prob.features.gains(m, h), cfg.bandwidths[m],
                   cfg.frame_period, cfg.noise_power);
}

/// Power needed with every ratio at its lower bound.
inline Matrix lower_bound_powers(const GpProblem& prob) {
  Matrix p(prob.num_modalities(), prob.num_subdurations());
  for (int h = 0; h < prob.num_subdurations(); ++h)
    for (int m = 0; m < prob.num_modalities(); ++m) p(m, h) = entry_min_power(prob, m, h, prob.d_lb[h] * prob.c_lb[h]);
  return p;
}

/// Throws InfeasibleError when the budget cannot cover the lower bounds.
inline void check_feasible(const GpProblem& prob) {
  const double need = lower_bound_powers(prob).sum();
  if (need > prob.budget_total() * (1.0 + 1e-12)) {
    const double min_budget = need / prob.num_subdurations();
    throw InfeasibleError("infeasible: budget below minimum power at lower bounds (minimum feasible budget " +
                              std::to_string(min_budget) + " W)",
                          min_budget);
  }
}

/// Log-space description of the convex program.
struct ConvexProgram {
  int num_modalities = 0;
  int num_subdurations = 0;
  Matrix log_q_alpha;   // alpha * ln q
  Matrix ln_volume;     // ln Z
  Matrix rate_scale;    // dt * B_m (bits per unit log2-SNR)
  Matrix snr_per_watt;  // G / sigma^2
  std::vector<double> ln_d_lb;
  std::vector<double> ln_c_lb;
  double budget_total = 0.0;  // H * P_sum

  /// alpha ln q - d_hat - c_hat - t; feasible when <= 0.
  double epigraph_residual(int m, int h, double d_hat, double c_hat, double t) const {
    return log_q_alpha(m, h) - d_hat - c_hat - t;
  }
  /// Deliverable bits minus demanded bits; feasible when >= 0.
  double rate_residual(int m, int h, double d_hat, double c_hat, double p) const {
    return rate_scale(m, h) * std::log2(1.0 + snr_per_watt(m, h) * p) - std::exp(ln_volume(m, h) + d_hat + c_hat);
  }
};

inline ConvexProgram transform_to_convex(const GpProblem& prob) {
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  const auto& cfg = prob.cfg;
  ConvexProgram cp;
  cp.num_modalities = mm;
  cp.num_subdurations = hh;
  cp.log_q_alpha = cfg.alpha * prob.q_floor.array().log();
  cp.ln_volume.resize(mm, hh);
  cp.rate_scale.resize(mm, hh);
  cp.snr_per_watt = prob.features.gains / cfg.noise_power;
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m) {
      cp.ln_volume(m, h) = std::log(prob.features.volumes[m]);
      cp.rate_scale(m, h) = cfg.frame_period * cfg.bandwidths[m];
    }
  for (int h = 0; h < hh; ++h) {
    cp.ln_d_lb.push_back(std::log(prob.d_lb[h]));
    cp.ln_c_lb.push_back(std::log(prob.c_lb[h]));
  }
  cp.budget_total = prob.budget_total();
  return cp;
}

struct SolveResult {
  Allocation allocation;
  double objective = 0.0;  // C0
  double epigraph = 0.0;   // t = ln C0
  int iterations = 0;
  double solve_time = 0.0;  // s
  double max_rate_violation = 0.0;  // relative
  double power_violation = 0.0;     // relative
  std::string solver;
};

/// max over entries of q^alpha / (d c), using the floored SCI.
inline double allocation_objective(const GpProblem& prob, const Allocation& a) {
  double worst = 0.0;
  for (int h = 0; h < prob.num_subdurations(); ++h)
    for (int m = 0; m < prob.num_modalities(); ++m)
      worst = std::max(worst, std::pow(prob.q_floor(m, h), prob.cfg.alpha) / (a.d(m, h) * a.c(m, h)));
  return worst;
}

/// Relative shortfall of the worst rate constraint (0 when all hold).
inline double rate_violation(const GpProblem& prob, const Allocation& a) {
  const auto& cfg = prob.cfg;
  double worst = 0.0;
  for (int h = 0; h < prob.num_subdurations(); ++h)
    for (int m = 0; m < prob.num_modalities(); ++m) {
      const double demand = a.d(m, h) * a.c(m, h) * prob.features.volumes[m];
      const double supply =
          rate_bits(a.p(m, h), prob.features.gains(m, h), cfg.bandwidths[m], cfg.frame_period, cfg.noise_power);
      worst = std::max(worst, (demand - supply) / demand);
    }
  return worst;
}

/// Relative excess of the average power over the budget (0 when within).
inline double budget_violation(const GpProblem& prob, const Allocation& a) {
  const double avg = a.p.sum() / prob.num_subdurations();
  return std::max(0.0, (avg - prob.cfg.power_budget) / prob.cfg.power_budget);
}

inline SolveResult finalize(const GpProblem& prob, Allocation alloc, std::string solver, int iterations,
                            double seconds) {
  SolveResult r;
  r.allocation = std::move(alloc);
  r.objective = allocation_objective(prob, r.allocation);
  r.epigraph = std::log(r.objective);
  r.iterations = iterations;
  r.solve_time = seconds;
  r.max_rate_violation = rate_violation(prob, r.allocation);
  r.power_violation = budget_violation(prob, r.allocation);
  r.solver = std::move(solver);
  return r;
}

/// Splits ln(d c) into (d, c), keeping c as large as possible.
inline std::pair<double, double> split_product(double u, double d_lb, double c_lb) {
  const double lo = std::log(d_lb * c_lb);
  if (u > 1e-12 || u < lo - 1e-12) throw Error(ErrorKind::invalid_argument, "product bound violation");
  u = std::clamp(u, lo, 0.0);
  const double d_hat = std::max(std::log(d_lb), u);
  const double c_hat = std::min(0.0, u - d_hat);
  return {std::exp(d_hat), std::exp(c_hat)};
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Allocation with every entry at ln(d c) = u(m, h) and power at the minimum.
inline Allocation allocation_from_products(const GpProblem& prob, const Matrix& u) {
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  Allocation a{Matrix(mm, hh), Matrix(mm, hh), Matrix(mm, hh)};
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m) {
      const auto [d, c] = split_product(u(m, h), prob.d_lb[h], prob.c_lb[h]);
      a.d(m, h) = d;
      a.c(m, h) = c;
      a.p(m, h) = entry_min_power(prob, m, h, d * c);
    }
  return a;
}

}  // namespace detail

/// Log-barrier interior-point method on the convex program. Variables per
/// entry are (ln d, ln c, p / P_sum), plus the epigraph level t.
inline SolveResult solve_barrier(const GpProblem& prob, const SolverOptions& opts = {}) {
  const auto t0 = detail::Clock::now();
  check_feasible(prob);
  const ConvexProgram cp = transform_to_convex(prob);
  const int mm = cp.num_modalities;
  const int hh = cp.num_subdurations;
  const int k_count = mm * hh;
  const int n = 3 * k_count + 1;
  const int ti = 3 * k_count;
  const double p_ref = prob.cfg.power_budget;
  const double q_budget = cp.budget_total / p_ref;  // = H
  const Matrix p_lb = lower_bound_powers(prob);
  const double slack = cp.budget_total - p_lb.sum();

  auto entry = [mm](int k) { return std::pair<int, int>{k % mm, k / mm}; };

  // Degenerate case: the lower bounds use the whole budget.
  if (slack <= 1e-12 * cp.budget_total) {
    Matrix u(mm, hh);
    for (int k = 0; k < k_count; ++k) {
      const auto [m, h] = entry(k);
      u(m, h) = cp.ln_d_lb[h] + cp.ln_c_lb[h];
    }
    return finalize(prob, detail::allocation_from_products(prob, u), "barrier", 0, detail::seconds_since(t0));
  }

  std::vector<char> free_var(n, 1);
  for (int k = 0; k < k_count; ++k) {
    const int h = entry(k).second;
    if (cp.ln_d_lb[h] >= 0.0) free_var[3 * k] = 0;
    if (cp.ln_c_lb[h] >= 0.0) free_var[3 * k + 1] = 0;
  }

  // Strictly feasible start: products at a fraction gamma of their log lower
  // bound, chosen so the minimum power spends half of the slack.
  auto power_at = [&](double gamma) {
    double total = 0.0;
    for (int k = 0; k < k_count; ++k) {
      const auto [m, h] = entry(k);
      total += entry_min_power(prob, m, h, std::exp(gamma * (cp.ln_d_lb[h] + cp.ln_c_lb[h])));
    }
    return total;
  };
  double g_lo = 0.0, g_hi = 1.0;
  const double target = p_lb.sum() + 0.5 * slack;
  for (int i = 0; i < 200 && g_hi - g_lo > 1e-14; ++i) {
    const double mid = 0.5 * (g_lo + g_hi);
    (power_at(mid) > target ? g_lo : g_hi) = mid;
  }
  const double gamma = std::clamp(g_hi, 0.05, 1.0 - 1e-9);

  Eigen::VectorXd x(n);
  double t_start = -std::numeric_limits<double>::infinity();
  double spent = 0.0;
  for (int k = 0; k < k_count; ++k) {
    const auto [m, h] = entry(k);
    x(3 * k) = free_var[3 * k] ? gamma * cp.ln_d_lb[h] : 0.0;
    x(3 * k + 1) = free_var[3 * k + 1] ? gamma * cp.ln_c_lb[h] : 0.0;
    const double p = entry_min_power(prob, m, h, std::exp(x(3 * k) + x(3 * k + 1)));
    spent += p;
    x(3 * k + 2) = p / p_ref;
    t_start = std::max(t_start, cp.log_q_alpha(m, h) - x(3 * k) - x(3 * k + 1));
  }
  const double extra = (cp.budget_total - spent) / (2.0 * k_count) / p_ref;
  for (int k = 0; k < k_count; ++k) x(3 * k + 2) += extra;
  x(ti) = t_start + 1.0;

  // rate constraint per entry, normalized by Z: exp(s) - rho log2(1 + a q)
  Matrix rho(mm, hh), a_coef(mm, hh);
  for (int k = 0; k < k_count; ++k) {
    const auto [m, h] = entry(k);
    rho(m, h) = cp.rate_scale(m, h) / prob.features.volumes[m];
    a_coef(m, h) = cp.snr_per_watt(m, h) * p_ref;
  }

  int constraint_count = 3 * k_count + 1;
  for (int i = 0; i < 3 * k_count; ++i)
    if (i % 3 != 2 && free_var[i]) constraint_count += 2;

  // Barrier value; +inf outside the strict interior.
  auto barrier = [&](const Eigen::VectorXd& z, double tau) {
    double phi = tau * z(ti);
    double qsum = 0.0;
    for (int k = 0; k < k_count; ++k) {
      const auto [m, h] = entry(k);
      const double dh = z(3 * k), ch = z(3 * k + 1), q = z(3 * k + 2);
      if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
      const double g1 = cp.log_q_alpha(m, h) - dh - ch - z(ti);
      const double g2 = std::exp(dh + ch) - rho(m, h) * std::log2(1.0 + a_coef(m, h) * q);
      if (!(g1 < 0.0) || !(g2 < 0.0)) return std::numeric_limits<double>::infinity();
      phi -= std::log(-g1) + std::log(-g2) + std::log(q);
      if (free_var[3 * k]) {
        if (!(dh > cp.ln_d_lb[h] && dh < 0.0)) return std::numeric_limits<double>::infinity();
        phi -= std::log(dh - cp.ln_d_lb[h]) + std::log(-dh);
      }
      if (free_var[3 * k + 1]) {
        if (!(ch > cp.ln_c_lb[h] && ch < 0.0)) return std::numeric_limits<double>::infinity();
        phi -= std::log(ch - cp.ln_c_lb[h]) + std::log(-ch);
      }
      qsum += q;
    }
    const double gb = qsum - q_budget;
    if (!(gb < 0.0)) return std::numeric_limits<double>::infinity();
    return phi - std::log(-gb);
  };

  auto derivatives = [&](const Eigen::VectorXd& z, double tau, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
    grad.setZero(n);
    hess.setZero(n, n);
    grad(ti) = tau;
    double qsum = 0.0;
    for (int k = 0; k < k_count; ++k) {
      const auto [m, h] = entry(k);
      const int id = 3 * k, ic = 3 * k + 1, iq = 3 * k + 2;
      const double dh = z(id), ch = z(ic), q = z(iq);
      qsum += q;
      // epigraph: gradient of g1 is (-1, -1, -1) on (d, c, t)
      const double g1 = cp.log_q_alpha(m, h) - dh - ch - z(ti);
      const int idx1[3] = {id, ic, ti};
      for (int i : idx1) {
        grad(i) += -1.0 / (-g1);
        for (int j : idx1) hess(i, j) += 1.0 / (g1 * g1);
      }
      // rate
      const double es = std::exp(dh + ch);
      const double one_aq = 1.0 + a_coef(m, h) * q;
      const double g2 = es - rho(m, h) * std::log2(one_aq);
      const double dq = -rho(m, h) * a_coef(m, h) / (one_aq * std::numbers::ln2);
      const double dqq = rho(m, h) * a_coef(m, h) * a_coef(m, h) / (one_aq * one_aq * std::numbers::ln2);
      const int idx2[3] = {id, ic, iq};
      const double gv[3] = {es, es, dq};
      for (int i = 0; i < 3; ++i) {
        grad(idx2[i]) += gv[i] / (-g2);
        for (int j = 0; j < 3; ++j) hess(idx2[i], idx2[j]) += gv[i] * gv[j] / (g2 * g2);
      }
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) hess(idx2[i], idx2[j]) += es / (-g2);
      hess(iq, iq) += dqq / (-g2);
      // q > 0
      grad(iq) += -1.0 / q;
      hess(iq, iq) += 1.0 / (q * q);
      // box bounds on ln d and ln c
      for (int i : {id, ic}) {
        if (!free_var[i]) continue;
        const double lb = (i == id) ? cp.ln_d_lb[h] : cp.ln_c_lb[h];
        const double v = z(i);
        grad(i) += -1.0 / (v - lb) - 1.0 / v;
        hess(i, i) += 1.0 / ((v - lb) * (v - lb)) + 1.0 / (v * v);
      }
    }
    const double gb = qsum - q_budget;
    for (int k = 0; k < k_count; ++k) {
      grad(3 * k + 2) += 1.0 / (-gb);
      for (int j = 0; j < k_count; ++j) hess(3 * k + 2, 3 * j + 2) += 1.0 / (gb * gb);
    }
    for (int i = 0; i < n; ++i) {
      if (free_var[i]) continue;
      grad(i) = 0.0;
      hess.row(i).setZero();
      hess.col(i).setZero();
      hess(i, i) = 1.0;
    }
  };

  double tau = opts.barrier_init;
  int total_newton = 0;
  Eigen::VectorXd grad(n);
  Eigen::MatrixXd hess(n, n);
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    for (int it = 0; it < opts.max_newton; ++it) {
      derivatives(x, tau, grad, hess);
      const Eigen::VectorXd step = hess.ldlt().solve(-grad);
      const double decrement = -grad.dot(step);
      if (!std::isfinite(decrement)) throw Error(ErrorKind::numerical, "barrier Newton step is not finite");
      ++total_newton;
      if (decrement / 2.0 <= opts.newton_tol) break;
      const double phi0 = barrier(x, tau);
      double s = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 80; ++ls) {
        const Eigen::VectorXd cand = x + s * step;
        const double phi = barrier(cand, tau);
        if (std::isfinite(phi) && phi <= phi0 - 0.25 * s * decrement) {
          x = cand;
          moved = true;
          break;
        }
        s *= 0.5;
      }
      if (!moved) break;
    }
    if (constraint_count / tau < opts.tol) {
      Matrix u(mm, hh);
      for (int k = 0; k < k_count; ++k) {
        const auto [m, h] = entry(k);
        u(m, h) = x(3 * k) + x(3 * k + 1);
      }
      Allocation alloc{Matrix(mm, hh), Matrix(mm, hh), Matrix(mm, hh)};
      for (int k = 0; k < k_count; ++k) {
        const auto [m, h] = entry(k);
        alloc.d(m, h) = std::exp(x(3 * k));
        alloc.c(m, h) = std::exp(x(3 * k + 1));
        alloc.p(m, h) = x(3 * k + 2) * p_ref;
      }
      SolveResult r = finalize(prob, std::move(alloc), "barrier", total_newton, detail::seconds_since(t0));
      if (r.max_rate_violation > opts.feas_tol || r.power_violation > opts.feas_tol)
        throw Error(ErrorKind::numerical, "barrier solution violates constraints");
      return r;
    }
    tau *= opts.barrier_growth;
  }
  throw Error(ErrorKind::numerical, "max barrier iterations exceeded");
}

/// Bisection on the epigraph level. At level t each entry takes
/// ln(d c) = clamp(alpha ln q - t, ln(d_lb c_lb), 0) and the minimum power
/// for it; total power is non-increasing in t. The search starts below the
/// largest alpha ln q so that budget left over at the optimum still raises
/// the other entries' ratios.
inline SolveResult solve_bisection(const GpProblem& prob, const SolverOptions& opts = {}) {
  const auto t0 = detail::Clock::now();
  check_feasible(prob);
  const ConvexProgram cp = transform_to_convex(prob);
  const int mm = cp.num_modalities;
  const int hh = cp.num_subdurations;

  auto products = [&](double t) {
    Matrix u(mm, hh);
    for (int h = 0; h < hh; ++h)
      for (int m = 0; m < mm; ++m)
        u(m, h) = std::clamp(cp.log_q_alpha(m, h) - t, cp.ln_d_lb[h] + cp.ln_c_lb[h], 0.0);
    return u;
  };
  auto total_power = [&](double t) {
    const Matrix u = products(t);
    double total = 0.0;
    for (int h = 0; h < hh; ++h)
      for (int m = 0; m < mm; ++m) total += entry_min_power(prob, m, h, std::exp(u(m, h)));
    return total;
  };

  double t_hi = -std::numeric_limits<double>::infinity();
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m)
      t_hi = std::max(t_hi, cp.log_q_alpha(m, h) - cp.ln_d_lb[h] - cp.ln_c_lb[h]);
  double lo = cp.log_q_alpha.minCoeff();
  double hi = t_hi;
  const double budget = cp.budget_total;
  int iterations = 0;
  if (total_power(lo) <= budget) {
    hi = lo;
  } else {
    while (hi - lo >= opts.tol && iterations < 400) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (total_power(mid) <= budget ? hi : lo) = mid;
      ++iterations;
    }
  }
  return finalize(prob, detail::allocation_from_products(prob, products(hi)), "bisect", iterations,
                  detail::seconds_since(t0));
}

struct OracleResult {
  bool feasible = false;
  double objective = std::numeric_limits<double>::infinity();  // best grid C0
  double resolution = 0.0;  // largest grid step in ln(d c)
  Allocation allocation;
};

/// Exhaustive branch-and-bound search over a log-spaced grid of products
/// ln(d c) in [ln(d_lb c_lb), 0] per entry. Exact for the grid problem.
inline OracleResult brute_force_oracle(const GpProblem& prob, int grid_points) {
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  const int k_count = mm * hh;
  if (k_count > 8) throw Error(ErrorKind::invalid_argument, "instance too large for brute-force oracle");
  if (grid_points < 2) throw Error(ErrorKind::invalid_argument, "grid needs at least 2 points");

  // grid[k][j]: j = 0 is the full product (u = 0), increasing j lowers u
  std::vector<std::vector<double>> u_grid(k_count), p_grid(k_count), term(k_count);
  std::vector<double> floor_power(k_count + 1, 0.0);
  OracleResult res;
  for (int k = 0; k < k_count; ++k) {
    const int m = k % mm, h = k / mm;
    const double lo = std::log(prob.d_lb[h] * prob.c_lb[h]);
    const double a = prob.cfg.alpha * std::log(prob.q_floor(m, h));
    res.resolution = std::max(res.resolution, -lo / (grid_points - 1));
    for (int j = 0; j < grid_points; ++j) {
      const double u = j == grid_points - 1 ? lo : lo * j / (grid_points - 1);
      u_grid[k].push_back(u);
      p_grid[k].push_back(entry_min_power(prob, m, h, std::exp(u)));
      term[k].push_back(a - u);
    }
  }
  for (int k = k_count - 1; k >= 0; --k) floor_power[k] = floor_power[k + 1] + p_grid[k].back();
  const double budget = prob.budget_total() * (1.0 + 1e-12);
  if (floor_power[0] > budget) return res;

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> choice(k_count), best_choice(k_count);
  std::function<void(int, double, double)> search = [&](int k, double used, double cur) {
    if (k == k_count) {
      best = cur;
      best_choice = choice;
      return;
    }
    for (int j = 0; j < grid_points; ++j) {
      const double worst = std::max(cur, term[k][j]);
      if (worst >= best) break;  // later j only raise this entry's term
      if (used + p_grid[k][j] + floor_power[k + 1] > budget) continue;
      choice[k] = j;
      search(k + 1, used + p_grid[k][j], worst);
    }
  };
  search(0, 0.0, -std::numeric_limits<double>::infinity());

  res.feasible = std::isfinite(best);
  if (!res.feasible) return res;
  Matrix u(mm, hh);
  for (int k = 0; k < k_count; ++k) u(k % mm, k / mm) = u_grid[k][best_choice[k]];
  res.allocation = detail::allocation_from_products(prob, u);
  res.objective = allocation_objective(prob, res.allocation);
  return res;
}

enum class SolverKind { barrier, bisect };

inline SolveResult solve(const GpProblem& prob, SolverKind kind, const SolverOptions& opts = {}) {
  return kind == SolverKind::barrier ? solve_barrier(prob, opts) : solve_bisection(prob, opts);
}

}  // namespace ipmc

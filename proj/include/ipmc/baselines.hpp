#pragma once

// Reference allocators: sum-rate water-filling (MaxRate), max-min common
// rate (Fairness) and a tiered adaptive-compression scheme (STS).
//
// All three reserve the power needed for the ratio lower bounds first, so
// their output is always rate-feasible when the problem is feasible.

#include "ipmc/core.hpp"
#include "ipmc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace ipmc {

namespace detail {

/// Largest x in [lo, hi] with total(x) <= budget, total non-decreasing.
inline double bisect_level(const std::function<double(double)>& total, double lo, double hi, double budget) {
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (total(mid) <= budget ? lo : hi) = mid;
  }
  return lo;
}

/// Turns powers into the largest supported ratios and splits them.
inline Allocation ratios_from_powers(const GpProblem& prob, const Matrix& p) {
  const auto& cfg = prob.cfg;
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  Allocation a{Matrix(mm, hh), Matrix(mm, hh), p};
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m) {
      const double supported = rate_bits(p(m, h), prob.features.gains(m, h), cfg.bandwidths[m], cfg.frame_period,
                                         cfg.noise_power) /
                               prob.features.volumes[m];
      const double lo = prob.d_lb[h] * prob.c_lb[h];
      const double product = std::clamp(supported, lo, 1.0);
      const auto [d, c] = split_product(std::log(product), prob.d_lb[h], prob.c_lb[h]);
      a.d(m, h) = d;
      a.c(m, h) = c;
    }
  return a;
}

inline Matrix noise_over_gain(const GpProblem& prob) {
  return prob.cfg.noise_power * prob.features.gains.cwiseInverse();
}

}  // namespace detail

/// Water-filling over all (m, h) channels: p = max(floor, B_m * level - sigma^2 / G).
inline Allocation baseline_maxrate(const ScenarioFeatures& features, const SystemConfig& cfg) {
  const GpProblem prob = make_problem(features, cfg);
  check_feasible(prob);
  const Matrix floor = lower_bound_powers(prob);
  const Matrix nk = detail::noise_over_gain(prob);
  const int mm = prob.num_modalities();
  auto powers = [&](double level) {
    Matrix p(floor.rows(), floor.cols());
    for (Eigen::Index h = 0; h < p.cols(); ++h)
      for (Eigen::Index m = 0; m < mm; ++m) p(m, h) = std::max(floor(m, h), cfg.bandwidths[m] * level - nk(m, h));
    return p;
  };
  const double budget = prob.budget_total();
  const double min_bw = *std::min_element(cfg.bandwidths.begin(), cfg.bandwidths.end());
  const double level_hi = (budget + nk.maxCoeff()) / min_bw;
  const double level = detail::bisect_level([&](double l) { return powers(l).sum(); }, 0.0, level_hi, budget);
  return detail::ratios_from_powers(prob, powers(level));
}

/// Water level of a MaxRate allocation (the common value of
/// (p + sigma^2/G) / B_m over channels above their floor).
inline double maxrate_level(const Allocation& a, const ScenarioFeatures& features, const SystemConfig& cfg, int m,
                            int h) {
  return (a.p(m, h) + cfg.noise_power / features.gains(m, h)) / cfg.bandwidths[m];
}

/// Max-min common rate: every channel receives the power for rate r, the
/// largest r the budget allows.
inline Allocation baseline_fairness(const ScenarioFeatures& features, const SystemConfig& cfg) {
  const GpProblem prob = make_problem(features, cfg);
  check_feasible(prob);
  const Matrix floor = lower_bound_powers(prob);
  const Matrix nk = detail::noise_over_gain(prob);
  const int mm = prob.num_modalities();
  auto powers = [&](double rate) {
    Matrix p(floor.rows(), floor.cols());
    for (Eigen::Index h = 0; h < p.cols(); ++h)
      for (Eigen::Index m = 0; m < mm; ++m) {
        const double exponent = std::min(rate / (cfg.frame_period * cfg.bandwidths[m]), kMaxRateExponent);
        p(m, h) = std::max(floor(m, h), nk(m, h) * std::expm1(exponent * std::numbers::ln2));
      }
    return p;
  };
  const double budget = prob.budget_total();
  double rate_hi = 0.0;
  for (Eigen::Index h = 0; h < floor.cols(); ++h)
    for (Eigen::Index m = 0; m < mm; ++m)
      rate_hi = std::max(rate_hi, rate_bits(budget, features.gains(m, h), cfg.bandwidths[m], cfg.frame_period,
                                            cfg.noise_power));
  const double rate = detail::bisect_level([&](double r) { return powers(r).sum(); }, 0.0, rate_hi, budget);
  return detail::ratios_from_powers(prob, powers(rate));
}

/// Achievable-product thresholds of the three STS quality tiers.
inline constexpr double kStsTiers[3] = {1.0, 0.5, 0.25};

/// Uniform power with compression picked per channel-quality tier; the
/// down-sampling rate then fills the remaining rate.
inline Allocation baseline_sts(const ScenarioFeatures& features, const SystemConfig& cfg) {
  const GpProblem prob = make_problem(features, cfg);
  check_feasible(prob);
  const Matrix floor = lower_bound_powers(prob);
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  auto powers = [&](double share) { return floor.cwiseMax(share); };
  const double budget = prob.budget_total();
  const double uniform_share = cfg.power_budget / mm;
  const double share = powers(uniform_share).sum() <= budget
                           ? uniform_share
                           : detail::bisect_level([&](double s) { return powers(s).sum(); }, 0.0, budget, budget);
  Allocation a{Matrix(mm, hh), Matrix(mm, hh), powers(share)};
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m) {
      const double supported = rate_bits(a.p(m, h), features.gains(m, h), cfg.bandwidths[m], cfg.frame_period,
                                         cfg.noise_power) /
                               features.volumes[m];
      const double c_lb = prob.c_lb[h];
      const double d_lb = prob.d_lb[h];
      double c_tier = c_lb;
      if (supported >= kStsTiers[0]) c_tier = 1.0;
      else if (supported >= kStsTiers[1]) c_tier = c_lb + (1.0 - c_lb) * 2.0 / 3.0;
      else if (supported >= kStsTiers[2]) c_tier = c_lb + (1.0 - c_lb) / 3.0;
      const double c = std::clamp(std::min(c_tier, supported / d_lb), c_lb, 1.0);
      a.c(m, h) = c;
      a.d(m, h) = std::clamp(supported / c, d_lb, 1.0);
    }
  return a;
}

enum class Method { gp, lto, maxrate, fairness, sts };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::gp: return "gp";
    case Method::lto: return "lto";
    case Method::maxrate: return "maxrate";
    case Method::fairness: return "fairness";
    case Method::sts: return "sts";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::gp, Method::lto, Method::maxrate, Method::fairness, Method::sts})
    if (method_name(m) == s) return m;
  throw Error(ErrorKind::invalid_argument, "unknown method '" + s + "'");
}

}  // namespace ipmc

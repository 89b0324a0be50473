#pragma once

// Shared domain types, configuration and seeded scenario randomness.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipmc {

/// M x H matrices (modality rows, sub-duration columns).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class ErrorKind { invalid_argument, dimension, infeasible, numerical, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown when no allocation satisfies the rate, budget and ratio bounds.
/// Carries the smallest average power budget that would be feasible.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, double min_budget)
      : Error(ErrorKind::infeasible, what), min_budget_(min_budget) {}
  double min_budget() const noexcept { return min_budget_; }

 private:
  double min_budget_;
};

enum class CurvatureAggregation { mean, max };

/// Physical and algorithmic constants of one edge-robotics deployment.
///
/// Powers are watts and gains are linear; decibels only appear at I/O.
struct SystemConfig {
  int num_modalities = 2;
  int num_subdurations = 20;
  int frames_per_subduration = 7;
  double frame_period = 0.1428;                    // s
  std::vector<double> bandwidths{0.5e6, 0.5e6};    // Hz per modality
  double total_bandwidth = 1.0e6;                  // Hz
  double noise_power = 1e-11;                      // W (-80 dBm)
  double power_budget = 0.01;                      // W, average per sub-duration
  std::vector<double> data_volumes{311352.0, 71168.0};  // bits per sample
  double d_min = 0.1;
  double c_min = 0.8;
  double delta_d = 0.4;
  double delta_c = 0.15;
  double alpha = 1.0;
  double curvature_threshold = 0.07;  // 1/m
  double wheelbase = 0.3;             // m
  double sci_floor = 1e-6;
  std::uint64_t rng_seed = 2024;
  CurvatureAggregation curvature_aggregation = CurvatureAggregation::mean;

  double d_lower(int motion_flag) const { return motion_flag * delta_d + d_min; }
  double c_lower(int motion_flag) const { return motion_flag * delta_c + c_min; }
};

struct ConfigIssue {
  std::string field;
  std::string message;
};

/// Every violated invariant of `cfg`; empty when the config is usable.
inline std::vector<ConfigIssue> validate_config(const SystemConfig& cfg) {
  std::vector<ConfigIssue> issues;
  auto add = [&](std::string field, std::string msg) {
    issues.push_back({std::move(field), std::move(msg)});
  };
  auto positive = [&](const char* field, double value) {
    if (!(value > 0.0) || !std::isfinite(value)) add(field, std::string(field) + " must be positive");
  };

  if (cfg.num_modalities < 1) add("num_modalities", "num_modalities must be at least 1");
  if (cfg.num_subdurations < 1) add("num_subdurations", "num_subdurations must be at least 1");
  if (cfg.frames_per_subduration < 2) add("frames_per_subduration", "frames_per_subduration must be at least 2");
  positive("frame_period", cfg.frame_period);
  positive("noise_power", cfg.noise_power);
  positive("power_budget", cfg.power_budget);
  positive("wheelbase", cfg.wheelbase);
  positive("sci_floor", cfg.sci_floor);
  positive("total_bandwidth", cfg.total_bandwidth);

  const auto m = static_cast<std::size_t>(std::max(cfg.num_modalities, 0));
  if (cfg.bandwidths.size() != m) {
    add("bandwidths", "bandwidths must have num_modalities entries");
  } else {
    double sum = 0.0;
    for (double b : cfg.bandwidths) {
      if (!(b > 0.0)) add("bandwidths", "bandwidths must be positive");
      sum += b;
    }
    if (std::abs(sum - cfg.total_bandwidth) > 1e-9 * cfg.total_bandwidth)
      add("bandwidths", "bandwidths must sum to total_bandwidth");
  }
  if (cfg.data_volumes.size() != m) {
    add("data_volumes", "data_volumes must have num_modalities entries");
  } else {
    for (double z : cfg.data_volumes)
      if (!(z > 0.0)) add("data_volumes", "data_volumes must be positive");
  }

  if (!(cfg.d_min > 0.0 && cfg.d_min <= 1.0)) add("d_min", "d_min must lie in (0, 1]");
  if (!(cfg.c_min > 0.0 && cfg.c_min <= 1.0)) add("c_min", "c_min must lie in (0, 1]");
  if (!(cfg.delta_d >= 0.0)) add("delta_d", "delta_d must be non-negative");
  if (!(cfg.delta_c >= 0.0)) add("delta_c", "delta_c must be non-negative");
  if (cfg.d_min + cfg.delta_d > 1.0) add("delta_d", "d_min + delta_d exceeds 1");
  if (cfg.c_min + cfg.delta_c > 1.0) add("delta_c", "c_min + delta_c exceeds 1");
  if (!(cfg.alpha >= 0.0)) add("alpha", "alpha must be non-negative");
  if (!(cfg.curvature_threshold > 0.0)) add("curvature_threshold", "curvature_threshold must be positive");
  return issues;
}

/// Throws an invalid_argument Error listing every issue.
inline void require_valid(const SystemConfig& cfg) {
  const auto issues = validate_config(cfg);
  if (issues.empty()) return;
  std::ostringstream os;
  os << "invalid config:";
  for (const auto& i : issues) os << ' ' << i.message << ';';
  throw Error(ErrorKind::invalid_argument, os.str());
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Channel gain range in dB; draws are uniform in dB then converted.
inline constexpr double kGainDbLow = -85.0;
inline constexpr double kGainDbHigh = -80.0;

inline Matrix sample_channel_gains(const SystemConfig& cfg, Rng& rng) {
  Matrix g(cfg.num_modalities, cfg.num_subdurations);
  // column-major fill order is part of the determinism contract
  for (int h = 0; h < cfg.num_subdurations; ++h)
    for (int m = 0; m < cfg.num_modalities; ++m)
      g(m, h) = db_to_linear(uniform(rng, kGainDbLow, kGainDbHigh));
  return g;
}

/// Per-scenario solver input.
struct ScenarioFeatures {
  Vector volumes;          // Z_m, bits
  Matrix sci_norm;         // normalized SCI in [0, 1], M x H
  std::vector<int> motion; // psi_h in {0, 1}
  Matrix gains;            // linear power gains, M x H

  int num_modalities() const { return static_cast<int>(sci_norm.rows()); }
  int num_subdurations() const { return static_cast<int>(sci_norm.cols()); }
};

inline void validate_features(const ScenarioFeatures& f) {
  const auto m = f.sci_norm.rows();
  const auto h = f.sci_norm.cols();
  if (f.volumes.size() != m || f.gains.rows() != m || f.gains.cols() != h ||
      static_cast<Eigen::Index>(f.motion.size()) != h)
    throw Error(ErrorKind::dimension, "dimension mismatch in scenario features");
  if (m == 0 || h == 0) throw Error(ErrorKind::dimension, "empty scenario features");
  for (Eigen::Index i = 0; i < f.sci_norm.size(); ++i) {
    const double q = f.sci_norm.data()[i];
    if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::invalid_argument, "sci_norm entries must lie in [0, 1]");
    if (!(f.gains.data()[i] > 0.0) || !std::isfinite(f.gains.data()[i]))
      throw Error(ErrorKind::invalid_argument, "gains must be positive and finite");
  }
  for (int v : f.motion)
    if (v != 0 && v != 1) throw Error(ErrorKind::invalid_argument, "motion flags must be 0 or 1");
  for (Eigen::Index i = 0; i < f.volumes.size(); ++i)
    if (!(f.volumes[i] > 0.0)) throw Error(ErrorKind::invalid_argument, "volumes must be positive");
}

/// Checks that features agree with the config's modality count.
inline void check_features_against(const ScenarioFeatures& f, const SystemConfig& cfg) {
  validate_features(f);
  if (f.num_modalities() != cfg.num_modalities)
    throw Error(ErrorKind::dimension, "dimension mismatch: features have " + std::to_string(f.num_modalities()) +
                                          " modalities, config has " + std::to_string(cfg.num_modalities));
}

/// Down-sampling rates, compression ratios and transmit powers (W), each M x H.
struct Allocation {
  Matrix d;
  Matrix c;
  Matrix p;
};

}  // namespace ipmc

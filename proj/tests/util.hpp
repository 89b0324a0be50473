#pragma once

#include "ipmc/core.hpp"
#include "ipmc/solver.hpp"

#include <filesystem>
#include <string>

namespace ipmc::test {

/// Random solver input with the default volumes and gain range.
inline ScenarioFeatures random_features(const SystemConfig& cfg, Rng& rng) {
  ScenarioFeatures f;
  f.volumes = Eigen::Map<const Vector>(cfg.data_volumes.data(), cfg.num_modalities);
  f.sci_norm = Matrix(cfg.num_modalities, cfg.num_subdurations);
  for (Eigen::Index i = 0; i < f.sci_norm.size(); ++i) f.sci_norm.data()[i] = uniform(rng, 0.0, 1.0);
  for (int h = 0; h < cfg.num_subdurations; ++h) f.motion.push_back(uniform(rng, 0.0, 1.0) < 0.4 ? 1 : 0);
  f.gains = sample_channel_gains(cfg, rng);
  return f;
}

/// Redraws until the lower-bound power fits the budget.
inline ScenarioFeatures random_feasible(const SystemConfig& cfg, Rng& rng) {
  for (;;) {
    ScenarioFeatures f = random_features(cfg, rng);
    try {
      check_feasible(make_problem(f, cfg));
      return f;
    } catch (const InfeasibleError&) {
    }
  }
}

inline SystemConfig small_config(int horizon) {
  SystemConfig cfg;
  cfg.num_subdurations = horizon;
  return cfg;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ipmc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ipmc::test

#pragma once

// End-to-end simulation: synthetic scenes rendered along a planned route,
// the down-sample / compress / recover channel, MSE and PSNR metrics, and
// method comparison.

#include "ipmc/baselines.hpp"
#include "ipmc/core.hpp"
#include "ipmc/lto.hpp"
#include "ipmc/scenario.hpp"
#include "ipmc/sci.hpp"
#include "ipmc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

namespace ipmc {

struct SyntheticScene {
  Route route;
  std::vector<TrajectoryPlan> plans;
  SceneModel model;
  std::vector<FrameSequence> frames;  // one per modality
  Matrix drift;                       // M x H decorrelation accumulated per sub-duration
  Matrix gains;                       // M x H channel power gains
};

/// Renders a scene along `plans`; the scene model and channel gains are
/// drawn from `rng`.
inline SyntheticScene synth_generate(const SystemConfig& cfg, std::vector<TrajectoryPlan> plans, Rng& rng,
                                     const SceneOptions& opt = {}) {
  require_valid(cfg);
  if (static_cast<int>(plans.size()) != cfg.num_subdurations)
    throw Error(ErrorKind::dimension, "dimension mismatch: one plan per sub-duration required");
  SyntheticScene sc;
  sc.plans = std::move(plans);
  sc.model = synth_scene_model(cfg, rng, opt);
  sc.gains = sample_channel_gains(cfg, rng);
  const int hh = cfg.num_subdurations;
  const int ll = cfg.frames_per_subduration;
  sc.drift = Matrix::Zero(cfg.num_modalities, hh);
  for (int m = 0; m < cfg.num_modalities; ++m) {
    const auto& md = sc.model.modalities[m];
    const auto rates = decorrelation_rates(md, sc.plans, cfg.frame_period, cfg.wheelbase);
    for (int h = 0; h < hh; ++h)
      for (int l = 0; l < ll; ++l) sc.drift(m, h) += rates[static_cast<std::size_t>(h) * ll + l];
    sc.frames.push_back(render_frames(md, m, rates, hh, ll, sc.model.noise_seed + 0x9e3779b97f4a7c15ULL * (m + 1)));
  }
  return sc;
}

/// Random route, MPC plans and rendered scene from a single seed.
inline SyntheticScene make_scene(const SystemConfig& cfg, std::uint64_t seed, const SceneOptions& scene_opt = {},
                                 const RouteOptions& route_opt = {}) {
  Rng rng(seed);
  Route route = synth_route(cfg.num_subdurations, cfg.frames_per_subduration, cfg.frame_period, cfg.wheelbase, rng,
                            route_opt);
  auto plans = plan_route(route, cfg);
  SyntheticScene sc = synth_generate(cfg, std::move(plans), rng, scene_opt);
  sc.route = std::move(route);
  return sc;
}

// ---------------------------------------------------------------------------
// Channel

/// K = max(1, round(d L)) evenly spaced frame indices, first included
/// (and the last, when K > 1).
inline std::vector<int> downsample_frames(int frames, double d) {
  if (!(d > 0.0 && d <= 1.0)) throw Error(ErrorKind::invalid_argument, "down-sampling rate must lie in (0, 1]");
  const int k = std::clamp(static_cast<int>(std::lround(d * frames)), 1, frames);
  std::vector<int> idx;
  if (k == 1) return {0};
  for (int i = 0; i < k; ++i)
    idx.push_back(static_cast<int>(std::lround(static_cast<double>(i) * (frames - 1) / (k - 1))));
  return idx;
}

inline constexpr int kFullBits = 8;

inline int compression_bits(double c) {
  if (!(c > 0.0 && c <= 1.0)) throw Error(ErrorKind::invalid_argument, "compression ratio must lie in (0, 1]");
  return std::max(1, static_cast<int>(std::lround(c * kFullBits)));
}

/// Mid-rise uniform quantization of values in [0, 1] to round(8c) bits.
inline std::vector<float> compress_quantize(const float* frame, std::size_t n, double c) {
  const double levels = std::ldexp(1.0, compression_bits(c));
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = std::clamp(std::floor(static_cast<double>(frame[i]) * levels), 0.0, levels - 1.0);
    out[i] = static_cast<float>((k + 0.5) / levels);
  }
  return out;
}

/// Full sequence of `frames` frames from the kept ones: linear
/// interpolation between neighbouring kept frames, held beyond the ends.
inline std::vector<std::vector<float>> reconstruct(const std::vector<std::vector<float>>& kept,
                                                   const std::vector<int>& indices, int frames) {
  if (kept.empty() || kept.size() != indices.size()) throw Error(ErrorKind::dimension, "dimension mismatch");
  const std::size_t n = kept.front().size();
  std::vector<std::vector<float>> out(static_cast<std::size_t>(frames), std::vector<float>(n));
  for (int l = 0; l < frames; ++l) {
    auto it = std::upper_bound(indices.begin(), indices.end(), l);
    if (it == indices.begin()) {
      out[l] = kept.front();
    } else if (it == indices.end()) {
      out[l] = kept.back();
    } else {
      const std::size_t hi = static_cast<std::size_t>(it - indices.begin());
      const std::size_t lo = hi - 1;
      const double w = static_cast<double>(l - indices[lo]) / (indices[hi] - indices[lo]);
      for (std::size_t i = 0; i < n; ++i)
        out[l][i] = static_cast<float>((1.0 - w) * kept[lo][i] + w * kept[hi][i]);
    }
  }
  return out;
}

/// Mean over frames and elements of the squared error.
inline double frame_mse(const std::vector<const float*>& original, const std::vector<std::vector<float>>& recovered,
                        std::size_t n) {
  if (original.size() != recovered.size() || original.empty()) throw Error(ErrorKind::dimension, "shape mismatch");
  double acc = 0.0;
  for (std::size_t l = 0; l < original.size(); ++l) {
    if (recovered[l].size() != n) throw Error(ErrorKind::dimension, "shape mismatch");
    acc += frame_sq_diff(original[l], recovered[l].data(), n);
  }
  return acc / static_cast<double>(original.size());
}

inline constexpr double kPsnrCap = 99.0;

inline double psnr(double mse, double peak = 1.0) {
  if (mse < 0.0) throw Error(ErrorKind::invalid_argument, "negative MSE");
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

/// Distortion of sub-duration h of one modality after transmission at (d, c).
inline double channel_mse(const FrameSequence& fs, int h, double d, double c) {
  const int ll = fs.frames_per_subduration;
  const auto idx = downsample_frames(ll, d);
  std::vector<std::vector<float>> kept;
  for (int l : idx) kept.push_back(compress_quantize(fs.frame(h, l), fs.frame_length, c));
  const auto rec = reconstruct(kept, idx, ll);
  std::vector<const float*> orig;
  for (int l = 0; l < ll; ++l) orig.push_back(fs.frame(h, l));
  return frame_mse(orig, rec, fs.frame_length);
}

// ---------------------------------------------------------------------------
// Pipeline

struct Metrics {
  Matrix mse;                    // M x H
  Matrix psnr;                   // M x H, dB
  Matrix normalized;             // M x H, MSE over the modality's largest raw SCI
  double worst_normalized = 0.0;
  std::vector<double> mean_mse;   // per modality
  std::vector<double> mean_psnr;  // per modality
  double power_used = 0.0;        // W, average per sub-duration
};

struct MethodRun {
  Method method = Method::gp;
  bool ok = false;
  std::string error;
  Allocation allocation;
  Metrics metrics;
  double decision_seconds = 0.0;
};

/// Solver inputs derived from a scene: SCI from the rendered frames, flags
/// from the plans, gains from the scene.
struct SceneInputs {
  Matrix sci_raw;
  ScenarioFeatures features;
  std::vector<std::string> warnings;
};

inline SceneInputs scene_inputs(const SyntheticScene& scene, const SystemConfig& cfg) {
  SceneInputs in;
  const int mm = cfg.num_modalities;
  in.sci_raw = Matrix(mm, cfg.num_subdurations);
  for (int m = 0; m < mm; ++m) {
    const auto row = sci(scene.frames[m]);
    for (int h = 0; h < cfg.num_subdurations; ++h) in.sci_raw(m, h) = row[h];
  }
  auto norm = normalize_sci(in.sci_raw);
  in.warnings = std::move(norm.warnings);
  in.features.volumes = Eigen::Map<const Vector>(cfg.data_volumes.data(), mm);
  in.features.sci_norm = std::move(norm.q_norm);
  in.features.motion = motion_vector(plan_curvatures(scene.plans), cfg.curvature_threshold);
  in.features.gains = scene.gains;
  return in;
}

inline Metrics evaluate_allocation(const SyntheticScene& scene, const SceneInputs& in, const Allocation& a,
                                   const SystemConfig& cfg) {
  const int mm = cfg.num_modalities;
  const int hh = cfg.num_subdurations;
  Metrics mt;
  mt.mse = Matrix(mm, hh);
  mt.psnr = Matrix(mm, hh);
  mt.normalized = Matrix(mm, hh);
  for (int m = 0; m < mm; ++m) {
    const double peak_sci = in.sci_raw.row(m).maxCoeff();
    const double scale = peak_sci > 0.0 ? peak_sci : 1.0;
    for (int h = 0; h < hh; ++h) {
      const double e = channel_mse(scene.frames[m], h, a.d(m, h), a.c(m, h));
      mt.mse(m, h) = e;
      mt.psnr(m, h) = psnr(e);
      mt.normalized(m, h) = e / scale;
    }
    mt.mean_mse.push_back(mt.mse.row(m).mean());
    mt.mean_psnr.push_back(mt.psnr.row(m).mean());
  }
  mt.worst_normalized = mt.normalized.maxCoeff();
  mt.power_used = a.p.sum() / hh;
  return mt;
}

inline Allocation decide(Method method, const ScenarioFeatures& features, const SystemConfig& cfg,
                         const MlpModel* model) {
  switch (method) {
    case Method::gp: {
      SolverOptions opts;
      opts.tol = 1e-10;
      return solve_bisection(make_problem(features, cfg), opts).allocation;
    }
    case Method::lto:
      if (model == nullptr) throw Error(ErrorKind::invalid_argument, "lto method requires a trained model");
      check_feasible(make_problem(features, cfg));
      return infer(*model, features, cfg).allocation;
    case Method::maxrate: return baseline_maxrate(features, cfg);
    case Method::fairness: return baseline_fairness(features, cfg);
    case Method::sts: return baseline_sts(features, cfg);
  }
  throw Error(ErrorKind::invalid_argument, "unknown method");
}

/// Allocation by `method`, then the channel. Failures are reported in the
/// result, not thrown.
inline MethodRun run_pipeline(const SyntheticScene& scene, const SceneInputs& in, Method method,
                              const SystemConfig& cfg, const MlpModel* model = nullptr) {
  MethodRun run;
  run.method = method;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    run.allocation = decide(method, in.features, cfg, model);
    run.decision_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.metrics = evaluate_allocation(scene, in, run.allocation, cfg);
    run.ok = true;
  } catch (const Error& e) {
    run.error = e.what();
  }
  return run;
}

inline MethodRun run_pipeline(const SyntheticScene& scene, Method method, const SystemConfig& cfg,
                              const MlpModel* model = nullptr) {
  return run_pipeline(scene, scene_inputs(scene, cfg), method, cfg, model);
}

inline std::vector<Method> all_methods(bool with_lto) {
  std::vector<Method> out{Method::gp};
  if (with_lto) out.push_back(Method::lto);
  out.insert(out.end(), {Method::maxrate, Method::fairness, Method::sts});
  return out;
}

/// Every method on the same scene; LTO only when a model is given.
inline std::vector<MethodRun> compare_methods(const SyntheticScene& scene, const SystemConfig& cfg,
                                              const MlpModel* model = nullptr) {
  const SceneInputs in = scene_inputs(scene, cfg);
  std::vector<MethodRun> runs;
  for (Method m : all_methods(model != nullptr)) runs.push_back(run_pipeline(scene, in, m, cfg, model));
  return runs;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::string parameter;  // "alpha" or "theta_th"
  double value = 0.0;
  double power_budget = 0.0;
  std::uint64_t seed = 0;
  Method method = Method::gp;
  bool ok = false;
  std::vector<double> mean_mse;
  std::vector<double> mean_psnr;
  double worst_normalized = 0.0;
};

/// GP pipeline over a grid of (parameter value, budget) for each seed.
/// `set` writes the swept value into the config.
template <class Setter>
std::vector<SweepRow> sweep(const std::string& name, const std::vector<double>& values,
                            const std::vector<double>& budgets, const std::vector<std::uint64_t>& seeds,
                            const SystemConfig& base, Setter set) {
  std::vector<SweepRow> rows;
  for (std::uint64_t seed : seeds) {
    const SyntheticScene scene = make_scene(base, seed);
    for (double v : values)
      for (double b : budgets) {
        SystemConfig cfg = base;
        cfg.power_budget = b;
        set(cfg, v);
        const MethodRun run = run_pipeline(scene, Method::gp, cfg);
        SweepRow row{name, v, b, seed, Method::gp, run.ok, {}, {}, 0.0};
        if (run.ok) {
          row.mean_mse = run.metrics.mean_mse;
          row.mean_psnr = run.metrics.mean_psnr;
          row.worst_normalized = run.metrics.worst_normalized;
        }
        rows.push_back(std::move(row));
      }
  }
  return rows;
}

inline std::vector<SweepRow> alpha_sweep(const std::vector<double>& alphas, const std::vector<double>& budgets,
                                         const std::vector<std::uint64_t>& seeds, const SystemConfig& base) {
  return sweep("alpha", alphas, budgets, seeds, base, [](SystemConfig& c, double v) { c.alpha = v; });
}

inline std::vector<SweepRow> theta_sweep(const std::vector<double>& thresholds, const std::vector<double>& budgets,
                                         const std::vector<std::uint64_t>& seeds, const SystemConfig& base) {
  return sweep("theta_th", thresholds, budgets, seeds, base,
               [](SystemConfig& c, double v) { c.curvature_threshold = v; });
}

}  // namespace ipmc

#pragma once

// Synthetic routes and scene dynamics shared by the dataset generator and
// the end-to-end simulator.
//
// A scene is a spatially smooth random field per modality channel whose
// content is renewed as the robot moves: slowly with translation, quickly
// with rotation. SCI values can be computed from materialized frames or, in
// closed form, from the motion alone.

#include "ipmc/core.hpp"
#include "ipmc/kinematics.hpp"
#include "ipmc/sci.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace ipmc {

enum class SegmentKind { straight, turn_left, turn_right, stop };

struct RouteOptions {
  double speed_lo = 0.4;      // m/s, straight and turn segments
  double speed_hi = 0.9;
  double turn_radius = 2.0;   // m
  double p_straight = 0.45;   // segment-type mix
  double p_turn = 0.35;
  int max_segment_len = 4;    // sub-durations
};

struct Route {
  std::vector<SegmentKind> kinds;           // per sub-duration
  std::vector<double> speeds;               // reference speed per sub-duration
  std::vector<std::vector<RobotState>> waypoints;  // L targets per sub-duration
  RobotState start;
};

/// Reference waypoints for a constant speed/curvature segment, rolled out
/// through the same kinematic model the tracker uses.
inline std::vector<RobotState> segment_waypoints(const RobotState& from, double speed, double curvature, int frames,
                                                 double dt, double wheelbase = 0.3) {
  std::vector<RobotState> out;
  const ControlInput u{speed, std::atan(curvature * wheelbase)};
  RobotState s = from;
  for (int l = 0; l < frames; ++l) {
    s = propagate(s, u, dt, wheelbase);
    out.push_back(s);
  }
  return out;
}

inline double segment_curvature(SegmentKind k, double radius) {
  if (k == SegmentKind::turn_left) return 1.0 / radius;
  if (k == SegmentKind::turn_right) return -1.0 / radius;
  return 0.0;
}

/// Builds a route from an explicit per-sub-duration plan of kinds and speeds.
inline Route route_from_segments(const std::vector<SegmentKind>& kinds, const std::vector<double>& speeds, int frames,
                                 double dt, double radius, double wheelbase, const RobotState& start = {}) {
  Route r;
  r.kinds = kinds;
  r.speeds = speeds;
  r.start = start;
  RobotState s = start;
  for (std::size_t h = 0; h < kinds.size(); ++h) {
    const double v = kinds[h] == SegmentKind::stop ? 0.0 : speeds[h];
    auto wps = segment_waypoints(s, v, segment_curvature(kinds[h], radius), frames, dt, wheelbase);
    s = wps.back();
    r.waypoints.push_back(std::move(wps));
  }
  return r;
}

/// Random route: a Markov sequence of straight, turning and stopped segments.
inline Route synth_route(int num_subdurations, int frames, double dt, double wheelbase, Rng& rng,
                         const RouteOptions& opt = {}) {
  std::vector<SegmentKind> kinds;
  std::vector<double> speeds;
  while (static_cast<int>(kinds.size()) < num_subdurations) {
    const double x = uniform(rng, 0.0, 1.0);
    SegmentKind k = SegmentKind::stop;
    if (x < opt.p_straight) k = SegmentKind::straight;
    else if (x < opt.p_straight + opt.p_turn) k = uniform(rng, 0.0, 1.0) < 0.5 ? SegmentKind::turn_left : SegmentKind::turn_right;
    const int len = 1 + static_cast<int>(uniform(rng, 0.0, 1.0) * opt.max_segment_len);
    const double v = uniform(rng, opt.speed_lo, opt.speed_hi);
    for (int i = 0; i < len && static_cast<int>(kinds.size()) < num_subdurations; ++i) {
      kinds.push_back(k);
      speeds.push_back(v);
    }
  }
  return route_from_segments(kinds, speeds, frames, dt, opt.turn_radius, wheelbase);
}

/// MPC settings used for route tracking.
inline MpcSpec default_mpc(const SystemConfig& cfg) {
  MpcSpec spec;
  spec.dt = cfg.frame_period;
  spec.wheelbase = cfg.wheelbase;
  spec.aggregation = cfg.curvature_aggregation;
  spec.max_iterations = 60;
  spec.convergence_tol = 1e-14;
  return spec;
}

inline std::vector<TrajectoryPlan> plan_route(const Route& route, const SystemConfig& cfg) {
  return plan_route(route.waypoints, route.start, default_mpc(cfg));
}

inline std::vector<double> plan_curvatures(const std::vector<TrajectoryPlan>& plans) {
  std::vector<double> th;
  th.reserve(plans.size());
  for (const auto& p : plans) th.push_back(p.curvature);
  return th;
}

// ---------------------------------------------------------------------------
// Scene dynamics

struct ModalityDynamics {
  int channels = 1;               // 3 for RGB, 2 for point coordinates
  std::size_t frame_length = 0;   // N_m = channels * samples per channel
  double translation_rate = 0.0;  // decorrelation per metre travelled
  double rotation_rate = 0.0;     // decorrelation per radian turned
  double amplitude = 0.1;         // stationary std of the field around 0.5
  int smoothing = 8;              // spatial box-filter width, samples
};

struct SceneModel {
  std::vector<ModalityDynamics> modalities;
  std::uint64_t noise_seed = 0;
};

struct SceneOptions {
  std::vector<std::size_t> frame_lengths;  // default: Z_m / 8 (8-bit elements)
  std::vector<int> channels{3, 2};
  std::vector<double> translation_rate{0.1, 0.15};
  std::vector<double> rotation_rate{10.0, 6.0};
  // per-scene multiplicative jitter on both rates, uniform in [1 - j, 1 + j]
  double rate_jitter = 0.25;
  double amplitude = 0.1;
  int smoothing = 8;
};

inline SceneModel synth_scene_model(const SystemConfig& cfg, Rng& rng, const SceneOptions& opt = {}) {
  SceneModel model;
  for (int m = 0; m < cfg.num_modalities; ++m) {
    ModalityDynamics md;
    const auto pick = [&](const auto& v, auto fallback) { return m < static_cast<int>(v.size()) ? v[m] : fallback; };
    md.channels = pick(opt.channels, 1);
    md.frame_length = pick(opt.frame_lengths, static_cast<std::size_t>(cfg.data_volumes[m] / 8.0));
    md.frame_length -= md.frame_length % static_cast<std::size_t>(md.channels);
    md.translation_rate = pick(opt.translation_rate, 0.25) * uniform(rng, 1.0 - opt.rate_jitter, 1.0 + opt.rate_jitter);
    md.rotation_rate = pick(opt.rotation_rate, 8.0) * uniform(rng, 1.0 - opt.rate_jitter, 1.0 + opt.rate_jitter);
    md.amplitude = opt.amplitude;
    md.smoothing = opt.smoothing;
    model.modalities.push_back(md);
  }
  model.noise_seed = rng();
  return model;
}

/// Speeds below this are treated as standing still.
inline constexpr double kStillSpeed = 1e-3;

/// Decorrelation exponent of every frame, in frame order (h, l): frame
/// (h, l) keeps a fraction exp(-lambda) of the previous frame's content.
inline std::vector<double> decorrelation_rates(const ModalityDynamics& md, const std::vector<TrajectoryPlan>& plans,
                                               double dt, double wheelbase) {
  std::vector<double> rates;
  for (const auto& plan : plans)
    for (const auto& u : plan.controls) {
      const double v = std::abs(u.v) < kStillSpeed ? 0.0 : u.v;
      const double dist = std::abs(v) * dt;
      const double turn = std::abs(v * std::tan(u.delta) / wheelbase) * dt;
      rates.push_back(md.translation_rate * dist + md.rotation_rate * turn);
    }
  return rates;
}

/// Expected mean squared difference between consecutive frames, before
/// 8-bit quantization and clipping.
inline double expected_frame_sq_diff(const ModalityDynamics& md, double rate) {
  return 2.0 * (-std::expm1(-rate)) * md.amplitude * md.amplitude;
}

/// Closed-form SCI matrix from decorrelation rates (same boundary rule as sci()).
inline Matrix analytic_sci(const SceneModel& model, const std::vector<TrajectoryPlan>& plans, int frames, double dt,
                           double wheelbase) {
  const int hh = static_cast<int>(plans.size());
  Matrix q = Matrix::Zero(static_cast<Eigen::Index>(model.modalities.size()), hh);
  for (std::size_t m = 0; m < model.modalities.size(); ++m) {
    const auto rates = decorrelation_rates(model.modalities[m], plans, dt, wheelbase);
    for (int h = 0; h < hh; ++h) {
      double acc = 0.0;
      int terms = 0;
      for (int l = (h == 0 ? 1 : 0); l < frames; ++l) {
        acc += expected_frame_sq_diff(model.modalities[m], rates[static_cast<std::size_t>(h) * frames + l]);
        ++terms;
      }
      q(static_cast<Eigen::Index>(m), h) = acc / terms;
    }
  }
  return q;
}

/// Maps a value in [0, 1] onto the 8-bit mid-rise grid.
inline float quantize8(double x) {
  const double k = std::clamp(std::floor(x * 256.0), 0.0, 255.0);
  return static_cast<float>((k + 0.5) / 256.0);
}

/// Unit-variance, spatially smooth noise: circular box filter over white
/// noise, one independent row per channel.
inline void smooth_noise(std::vector<double>& out, int channels, int width, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t per_channel = out.size() / static_cast<std::size_t>(channels);
  std::vector<double> white(per_channel);
  const double norm = 1.0 / std::sqrt(static_cast<double>(width));
  for (int ch = 0; ch < channels; ++ch) {
    for (double& w : white) w = normal(rng);
    double window = 0.0;
    for (int k = 0; k < width; ++k) window += white[static_cast<std::size_t>(k) % per_channel];
    double* dst = out.data() + static_cast<std::size_t>(ch) * per_channel;
    for (std::size_t i = 0; i < per_channel; ++i) {
      dst[i] = window * norm;
      window += white[(i + static_cast<std::size_t>(width)) % per_channel] - white[i];
    }
  }
}

/// Materializes the frames of one modality: an Ornstein-Uhlenbeck field
/// y_l = rho_l y_{l-1} + sqrt(1 - rho_l^2) s eta_l with rho_l = exp(-rate_l),
/// offset to 0.5 and quantized to 8 bits.
inline FrameSequence render_frames(const ModalityDynamics& md, int modality, const std::vector<double>& rates,
                                   int num_subdurations, int frames, std::uint64_t seed) {
  FrameSequence fs(modality, md.frame_length, num_subdurations, frames);
  Rng rng(seed);
  std::vector<double> field(md.frame_length), eta(md.frame_length);
  smooth_noise(field, md.channels, md.smoothing, rng);
  for (double& y : field) y *= md.amplitude;
  for (int h = 0; h < num_subdurations; ++h)
    for (int l = 0; l < frames; ++l) {
      const double rate = rates[static_cast<std::size_t>(h) * frames + l];
      // a still frame draws no noise so the stream stays byte-identical
      if (rate > 0.0) {
        const double rho = std::exp(-rate);
        const double kick = std::sqrt(-std::expm1(-2.0 * rate)) * md.amplitude;
        smooth_noise(eta, md.channels, md.smoothing, rng);
        for (std::size_t i = 0; i < field.size(); ++i) field[i] = rho * field[i] + kick * eta[i];
      }
      float* out = fs.frame(h, l);
      for (std::size_t i = 0; i < field.size(); ++i) out[i] = quantize8(0.5 + field[i]);
    }
  return fs;
}

}  // namespace ipmc

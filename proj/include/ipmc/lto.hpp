#pragma once

// Learning to optimize: a fully connected regression network trained on
// per-sub-duration slices of exact solver output, and feasibility-projected
// inference.

#include "ipmc/core.hpp"
#include "ipmc/scenario.hpp"
#include "ipmc/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace ipmc {

/// Hidden widths of the imitation network.
inline constexpr std::array<int, 4> kHiddenWidths{64, 128, 256, 512};

/// Per-sub-duration input features:
///   Z_m in Mbit (M), normalized SCI of sub-duration h (M), psi_h (1),
///   and optionally channel gains in dB (M).
inline int feature_dim(int num_modalities, bool gain_features) {
  return 2 * num_modalities + 1 + (gain_features ? num_modalities : 0);
}

/// Targets are (ln d, ln c, ln p) per modality: 3M values.
inline int target_dim(int num_modalities) { return 3 * num_modalities; }

inline Vector slice_features(const ScenarioFeatures& f, int h, bool gain_features) {
  const int mm = f.num_modalities();
  Vector x(feature_dim(mm, gain_features));
  for (int m = 0; m < mm; ++m) {
    x[m] = f.volumes[m] * 1e-6;
    x[mm + m] = f.sci_norm(m, h);
  }
  x[2 * mm] = f.motion[h];
  if (gain_features)
    for (int m = 0; m < mm; ++m) x[2 * mm + 1 + m] = linear_to_db(f.gains(m, h));
  return x;
}

inline Vector slice_targets(const Allocation& a, int h) {
  const auto mm = a.d.rows();
  Vector y(3 * mm);
  for (Eigen::Index m = 0; m < mm; ++m) {
    y[m] = std::log(a.d(m, h));
    y[mm + m] = std::log(a.c(m, h));
    y[2 * mm + m] = std::log(a.p(m, h));
  }
  return y;
}

/// Demonstration samples, one column per sub-duration.
struct Dataset {
  Eigen::MatrixXd inputs;   // feature_dim x n
  Eigen::MatrixXd targets;  // target_dim x n, log space
  int num_modalities = 2;
  bool gain_features = false;
  int skipped_scenarios = 0;

  Eigen::Index size() const { return inputs.cols(); }
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Leading `train_size` samples train, the rest test.
inline DatasetSplit split_dataset(const Dataset& all, Eigen::Index train_size) {
  if (train_size <= 0 || train_size >= all.size())
    throw Error(ErrorKind::invalid_argument, "train size must leave a non-empty test set");
  DatasetSplit s{all, all};
  s.train.inputs = all.inputs.leftCols(train_size);
  s.train.targets = all.targets.leftCols(train_size);
  s.test.inputs = all.inputs.rightCols(all.size() - train_size);
  s.test.targets = all.targets.rightCols(all.size() - train_size);
  return s;
}

/// A synthetic scenario: route, plans, scene model and solver features.
struct Scenario {
  Route route;
  std::vector<TrajectoryPlan> plans;
  SceneModel scene;
  Matrix sci_raw;
  ScenarioFeatures features;
  std::vector<std::string> warnings;
};

/// Features from a random route; SCI comes from the closed-form scene
/// statistics so no frames are materialized.
inline Scenario synth_scenario(const SystemConfig& cfg, Rng& rng, const SceneOptions& scene_opt = {},
                               const RouteOptions& route_opt = {}) {
  Scenario sc;
  sc.route = synth_route(cfg.num_subdurations, cfg.frames_per_subduration, cfg.frame_period, cfg.wheelbase, rng, route_opt);
  sc.plans = plan_route(sc.route, cfg);
  sc.scene = synth_scene_model(cfg, rng, scene_opt);
  sc.sci_raw = analytic_sci(sc.scene, sc.plans, cfg.frames_per_subduration, cfg.frame_period, cfg.wheelbase);
  auto norm = normalize_sci(sc.sci_raw);
  sc.warnings = std::move(norm.warnings);
  sc.features.volumes = Eigen::Map<const Vector>(cfg.data_volumes.data(), cfg.num_modalities);
  sc.features.sci_norm = std::move(norm.q_norm);
  sc.features.motion = motion_vector(plan_curvatures(sc.plans), cfg.curvature_threshold);
  sc.features.gains = sample_channel_gains(cfg, rng);
  return sc;
}

/// Solves `num_scenarios` random scenarios exactly (bisection) and slices
/// every sub-duration into a sample. Infeasible scenarios are skipped.
inline Dataset generate_dataset(int num_scenarios, const SystemConfig& cfg, Rng& rng, bool gain_features = false) {
  require_valid(cfg);
  const int mm = cfg.num_modalities;
  std::vector<Vector> xs, ys;
  Dataset ds;
  ds.num_modalities = mm;
  ds.gain_features = gain_features;
  SolverOptions opts;
  opts.tol = 1e-10;
  for (int s = 0; s < num_scenarios; ++s) {
    const Scenario sc = synth_scenario(cfg, rng);
    SolveResult res;
    try {
      res = solve_bisection(make_problem(sc.features, cfg), opts);
    } catch (const InfeasibleError&) {
      ++ds.skipped_scenarios;
      continue;
    }
    for (int h = 0; h < cfg.num_subdurations; ++h) {
      xs.push_back(slice_features(sc.features, h, gain_features));
      ys.push_back(slice_targets(res.allocation, h));
    }
  }
  ds.inputs.resize(feature_dim(mm, gain_features), static_cast<Eigen::Index>(xs.size()));
  ds.targets.resize(target_dim(mm), static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ds.inputs.col(static_cast<Eigen::Index>(i)) = xs[i];
    ds.targets.col(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Network

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// ReLU on every layer but the last; columns of `x` are samples.
inline Eigen::MatrixXd forward(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.cols() != a.rows()) throw Error(ErrorKind::dimension, "dimension mismatch in forward");
    Eigen::MatrixXd z = layers[i].weight * a;
    z.colwise() += layers[i].bias;
    if (i + 1 < layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

struct MlpModel {
  std::vector<DenseLayer> layers;
  // affine normalization: x_norm = (x - mean) / scale
  Vector input_mean, input_scale;
  Vector target_mean, target_scale;
  int num_modalities = 2;
  bool gain_features = false;

  std::vector<int> widths() const {
    std::vector<int> w;
    if (layers.empty()) return w;
    w.push_back(static_cast<int>(layers.front().weight.cols()));
    for (const auto& l : layers) w.push_back(static_cast<int>(l.weight.rows()));
    return w;
  }

  Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& x) const {
    return (x.colwise() - input_mean).array().colwise() / input_scale.array();
  }
  Eigen::MatrixXd normalize_targets(const Eigen::MatrixXd& y) const {
    return (y.colwise() - target_mean).array().colwise() / target_scale.array();
  }
  Eigen::MatrixXd denormalize_targets(const Eigen::MatrixXd& y) const {
    return (y.array().colwise() * target_scale.array()).colwise() + target_mean.array();
  }
  /// Raw features in, log-space targets out.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const {
    return denormalize_targets(forward(layers, normalize_inputs(x)));
  }
};

inline std::vector<int> expected_widths(int num_modalities, bool gain_features) {
  std::vector<int> w{feature_dim(num_modalities, gain_features)};
  w.insert(w.end(), kHiddenWidths.begin(), kHiddenWidths.end());
  w.push_back(target_dim(num_modalities));
  return w;
}

/// He-initialized network with identity normalization.
inline MlpModel make_mlp(int num_modalities, bool gain_features, Rng& rng) {
  MlpModel model;
  model.num_modalities = num_modalities;
  model.gain_features = gain_features;
  const auto w = expected_widths(num_modalities, gain_features);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    DenseLayer layer{Eigen::MatrixXd(w[i + 1], w[i]), Eigen::VectorXd::Zero(w[i + 1])};
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / w[i]));
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    model.layers.push_back(std::move(layer));
  }
  model.input_mean = Vector::Zero(w.front());
  model.input_scale = Vector::Ones(w.front());
  model.target_mean = Vector::Zero(w.back());
  model.target_scale = Vector::Ones(w.back());
  return model;
}

/// Per-row mean and standard deviation (1 where a row is constant).
inline std::pair<Vector, Vector> row_stats(const Eigen::MatrixXd& x) {
  const Vector mean = x.rowwise().mean();
  Vector scale = ((x.colwise() - mean).array().square().rowwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < scale.size(); ++i)
    if (!(scale[i] > 1e-12)) scale[i] = 1.0;
  return {mean, scale};
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

/// Mean squared error over all entries of the batch.
inline double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

/// Loss and its gradient w.r.t. every parameter for a batch (already in
/// normalized space; columns are samples).
inline double backward(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       Gradients& grads) {
  if (x.cols() == 0) throw Error(ErrorKind::invalid_argument, "empty batch");
  const std::size_t n_layers = layers.size();
  std::vector<Eigen::MatrixXd> acts(n_layers + 1);
  acts[0] = x;
  for (std::size_t i = 0; i < n_layers; ++i) {
    Eigen::MatrixXd z = layers[i].weight * acts[i];
    z.colwise() += layers[i].bias;
    if (i + 1 < n_layers) z = z.cwiseMax(0.0);
    acts[i + 1] = std::move(z);
  }
  const double loss = mse_loss(acts[n_layers], y);
  if (!std::isfinite(loss)) throw Error(ErrorKind::numerical, "divergence");

  grads.weight.resize(n_layers);
  grads.bias.resize(n_layers);
  Eigen::MatrixXd delta = (2.0 / static_cast<double>(y.size())) * (acts[n_layers] - y);
  for (std::size_t i = n_layers; i-- > 0;) {
    grads.weight[i].noalias() = delta * acts[i].transpose();
    grads.bias[i] = delta.rowwise().sum();
    if (i > 0) {
      Eigen::MatrixXd back = layers[i].weight.transpose() * delta;
      // ReLU derivative from the stored activation
      delta = (acts[i].array() > 0.0).select(back, 0.0);
    }
  }
  return loss;
}

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.01;
  int batch_size = 1024;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t rng_seed = 7;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  long step = 0;

  explicit AdamState(const std::vector<DenseLayer>& layers) {
    for (const auto& l : layers) {
      m_w.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
      v_w.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
      m_b.push_back(Eigen::VectorXd::Zero(l.bias.size()));
      v_b.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
  }
};

/// One bias-corrected Adam update; increments state.step first.
inline void adam_step(std::vector<DenseLayer>& layers, const Gradients& g, AdamState& st, const TrainConfig& cfg) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, st.m_w[i], st.v_w[i], g.weight[i]);
    update(layers[i].bias, st.m_b[i], st.v_b[i], g.bias[i]);
  }
}

/// 1 - SS_res / SS_tot over all entries, about the overall mean.
inline double evaluate_r2(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(ErrorKind::dimension, "dimension mismatch in R2");
  if (target.size() < 2) throw Error(ErrorKind::invalid_argument, "R2 needs at least 2 samples");
  const double mean = target.mean();
  const double ss_tot = (target.array() - mean).square().sum();
  if (!(ss_tot > 0.0)) throw Error(ErrorKind::invalid_argument, "zero target variance");
  return 1.0 - (pred - target).squaredNorm() / ss_tot;
}

/// R2 of each output row separately.
inline std::vector<double> evaluate_r2_per_output(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < target.rows(); ++r) out.push_back(evaluate_r2(pred.row(r), target.row(r)));
  return out;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_r2 = 0.0;
  double test_r2 = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> trace;
  std::vector<double> test_r2_per_output;
  double seconds = 0.0;
};

/// Trains on `split.train`, evaluates on `split.test` every epoch. Losses
/// and R2 are on normalized targets. Normalization statistics are frozen
/// from the training set.
inline TrainReport train(MlpModel& model, const DatasetSplit& split, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (split.train.size() == 0 || split.test.size() == 0) throw Error(ErrorKind::invalid_argument, "empty dataset split");
  if (split.train.inputs.rows() != model.layers.front().weight.cols() ||
      split.train.targets.rows() != model.layers.back().weight.rows())
    throw Error(ErrorKind::dimension, "dimension mismatch between dataset and model");
  std::tie(model.input_mean, model.input_scale) = row_stats(split.train.inputs);
  std::tie(model.target_mean, model.target_scale) = row_stats(split.train.targets);
  const Eigen::MatrixXd x_train = model.normalize_inputs(split.train.inputs);
  const Eigen::MatrixXd y_train = model.normalize_targets(split.train.targets);
  const Eigen::MatrixXd x_test = model.normalize_inputs(split.test.inputs);
  const Eigen::MatrixXd y_test = model.normalize_targets(split.test.targets);

  Rng rng(cfg.rng_seed);
  AdamState adam(model.layers);
  Gradients grads;
  const Eigen::Index n = x_train.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  TrainReport report;
  Eigen::MatrixXd xb, yb;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
      xb.resize(x_train.rows(), len);
      yb.resize(y_train.rows(), len);
      for (Eigen::Index j = 0; j < len; ++j) {
        xb.col(j) = x_train.col(order[static_cast<std::size_t>(start + j)]);
        yb.col(j) = y_train.col(order[static_cast<std::size_t>(start + j)]);
      }
      backward(model.layers, xb, yb, grads);
      adam_step(model.layers, grads, adam, cfg);
    }
    const Eigen::MatrixXd p_train = forward(model.layers, x_train);
    const Eigen::MatrixXd p_test = forward(model.layers, x_test);
    EpochStats st{epoch, mse_loss(p_train, y_train), mse_loss(p_test, y_test), evaluate_r2(p_train, y_train),
                  evaluate_r2(p_test, y_test)};
    if (!std::isfinite(st.train_loss)) throw Error(ErrorKind::numerical, "divergence");
    report.trace.push_back(st);
    if (epoch == cfg.epochs) report.test_r2_per_output = evaluate_r2_per_output(p_test, y_test);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// Online inference

/// Projects a raw allocation onto the feasible set of `prob`:
/// ratios clamped to their bounds, power raised to the rate-feasible
/// minimum, then (if over budget) the power above the lower-bound floor is
/// scaled down uniformly and the ratios reduced to what the power supports.
inline Allocation project_allocation(const GpProblem& prob, Allocation a, double budget) {
  const auto& cfg = prob.cfg;
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m) {
      a.d(m, h) = std::clamp(a.d(m, h), prob.d_lb[h], 1.0);
      a.c(m, h) = std::clamp(a.c(m, h), prob.c_lb[h], 1.0);
      const double need = entry_min_power(prob, m, h, a.d(m, h) * a.c(m, h));
      a.p(m, h) = std::max({a.p(m, h), 0.0, need});
    }
  const double total = a.p.sum();
  if (total <= budget * (1.0 + 1e-12)) return a;

  const Matrix floor = lower_bound_powers(prob);
  const double floor_total = floor.sum();
  if (floor_total > budget * (1.0 + 1e-12))
    throw InfeasibleError("infeasible: budget below minimum power at lower bounds", floor_total / hh);
  const double scale = std::max(0.0, (budget - floor_total) / (total - floor_total));
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m) {
      const double p = floor(m, h) + scale * (a.p(m, h) - floor(m, h));
      a.p(m, h) = p;
      const double supported =
          rate_bits(p, prob.features.gains(m, h), cfg.bandwidths[m], cfg.frame_period, cfg.noise_power) /
          prob.features.volumes[m];
      const double product = a.d(m, h) * a.c(m, h);
      if (supported < product) {
        const double lo = prob.d_lb[h] * prob.c_lb[h];
        const auto [d, c] = split_product(std::log(std::clamp(supported, lo, 1.0)), prob.d_lb[h], prob.c_lb[h]);
        a.d(m, h) = d;
        a.c(m, h) = c;
      }
    }
  return a;
}

struct InferenceResult {
  Allocation allocation;
  Allocation raw;
  double seconds = 0.0;
};

/// Network decisions for every sub-duration of a scenario, projected onto
/// the feasible set with the whole-scenario budget.
inline InferenceResult infer(const MlpModel& model, const ScenarioFeatures& features, const SystemConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const GpProblem prob = make_problem(features, cfg);
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  if (mm != model.num_modalities) throw Error(ErrorKind::dimension, "dimension mismatch: model modality count");
  Eigen::MatrixXd x(feature_dim(mm, model.gain_features), hh);
  for (int h = 0; h < hh; ++h) x.col(h) = slice_features(features, h, model.gain_features);
  const Eigen::MatrixXd y = model.predict(x).array().exp();
  InferenceResult r;
  r.raw = {Matrix(mm, hh), Matrix(mm, hh), Matrix(mm, hh)};
  for (int h = 0; h < hh; ++h)
    for (int m = 0; m < mm; ++m) {
      r.raw.d(m, h) = y(m, h);
      r.raw.c(m, h) = y(mm + m, h);
      r.raw.p(m, h) = y(2 * mm + m, h);
    }
  r.allocation = project_allocation(prob, r.raw, prob.budget_total());
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Running budget for sub-durations decided one at a time. Each decision
/// may spend what is left after reserving the lower-bound power of every
/// sub-duration still to come.
class BudgetTracker {
 public:
  BudgetTracker(const GpProblem& prob) : remaining_(prob.budget_total()) {
    const Matrix floor = lower_bound_powers(prob);
    reserve_.assign(static_cast<std::size_t>(prob.num_subdurations()) + 1, 0.0);
    for (int h = prob.num_subdurations() - 1; h >= 0; --h) reserve_[h] = reserve_[h + 1] + floor.col(h).sum();
  }

  double allowance(int h) const { return remaining_ - reserve_[static_cast<std::size_t>(h) + 1]; }
  void spend(double watts) { remaining_ -= watts; }
  double remaining() const { return remaining_; }

 private:
  double remaining_;
  std::vector<double> reserve_;
};

/// Sequential inference: sub-duration h is projected against the tracker's
/// allowance, so the cumulative budget holds at every step.
inline InferenceResult infer_online(const MlpModel& model, const ScenarioFeatures& features, const SystemConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const GpProblem prob = make_problem(features, cfg);
  check_feasible(prob);
  const int mm = prob.num_modalities();
  const int hh = prob.num_subdurations();
  BudgetTracker tracker(prob);
  InferenceResult r;
  r.raw = {Matrix(mm, hh), Matrix(mm, hh), Matrix(mm, hh)};
  r.allocation = r.raw;
  for (int h = 0; h < hh; ++h) {
    const Vector y = model.predict(slice_features(features, h, model.gain_features)).array().exp();
    ScenarioFeatures one{features.volumes, features.sci_norm.col(h), {features.motion[h]}, features.gains.col(h)};
    SystemConfig one_cfg = cfg;
    one_cfg.num_subdurations = 1;
    const GpProblem slice = make_problem(one, one_cfg);
    Allocation raw{Matrix(mm, 1), Matrix(mm, 1), Matrix(mm, 1)};
    for (int m = 0; m < mm; ++m) {
      raw.d(m, 0) = r.raw.d(m, h) = y[m];
      raw.c(m, 0) = r.raw.c(m, h) = y[mm + m];
      raw.p(m, 0) = r.raw.p(m, h) = y[2 * mm + m];
    }
    const Allocation out = project_allocation(slice, raw, tracker.allowance(h));
    tracker.spend(out.p.sum());
    r.allocation.d.col(h) = out.d.col(0);
    r.allocation.c.col(h) = out.c.col(0);
    r.allocation.p.col(h) = out.p.col(0);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace ipmc

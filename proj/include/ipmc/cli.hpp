#pragma once

// Command-line front end. Stages hand off through files in a run directory;
// wall-clock measurements go to *.timing.* sidecars so the primary outputs
// are byte-identical across runs with the same arguments and seed.

#include "ipmc/baselines.hpp"
#include "ipmc/core.hpp"
#include "ipmc/io.hpp"
#include "ipmc/lto.hpp"
#include "ipmc/scenario.hpp"
#include "ipmc/sci.hpp"
#include "ipmc/sim.hpp"
#include "ipmc/solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace ipmc::cli {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kConfigEnv = "IPMC_CONFIG";

enum ExitCode { ok = 0, usage = 1, infeasible = 2, numerical = 3 };

namespace fs = std::filesystem;

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <class Fn>
auto parallel_map(int n, int jobs, Fn fn) -> std::vector<decltype(fn(0))> {
  std::vector<std::optional<decltype(fn(0))>> slots(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto work = [&](int worker, int stride) {
    for (int i = worker; i < n; i += stride) {
      try {
        slots[static_cast<std::size_t>(i)].emplace(fn(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, std::max(n, 1));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
  }
  std::vector<decltype(fn(0))> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

struct Context {
  SystemConfig cfg;
  std::string config_source = "defaults";
  std::uint64_t seed = 0;
  std::string subcommand;
  std::vector<std::string> args;
};

inline void write_manifest(const fs::path& dir, const Context& ctx, const std::vector<std::string>& outputs) {
  json m{{"tool", "ipmc"},
         {"version", kVersion},
         {"format_versions", {{"model", kModelVersion}, {"frames", std::string(kFrameMagic.begin(), kFrameMagic.end())}}},
         {"subcommand", ctx.subcommand},
         {"arguments", ctx.args},
         {"seed", ctx.seed},
         {"config_source", ctx.config_source},
         {"config_hash", config_hash(ctx.cfg)},
         {"config", config_to_json(ctx.cfg)},
         {"outputs", outputs}};
  atomic_write(dir / "manifest.json", dump(m));
}

inline std::string seconds_json(const std::map<std::string, double>& t) { return dump(json(t)); }

// ---------------------------------------------------------------------------
// Tables

inline std::string sci_csv(const Matrix& raw, const Matrix& norm) {
  std::vector<std::string> head{"h"};
  for (Eigen::Index m = 0; m < raw.rows(); ++m) head.push_back("q_raw_" + std::to_string(m + 1));
  for (Eigen::Index m = 0; m < raw.rows(); ++m) head.push_back("q_norm_" + std::to_string(m + 1));
  std::string out = csv_line(head);
  for (Eigen::Index h = 0; h < raw.cols(); ++h) {
    std::vector<std::string> row{std::to_string(h + 1)};
    for (Eigen::Index m = 0; m < raw.rows(); ++m) row.push_back(fmt(raw(m, h)));
    for (Eigen::Index m = 0; m < raw.rows(); ++m) row.push_back(fmt(norm(m, h)));
    out += csv_line(row);
  }
  return out;
}

inline std::string curvature_csv(const std::vector<TrajectoryPlan>& plans, const std::vector<int>& motion) {
  std::string out = csv_line({"h", "theta_per_m", "psi"});
  for (std::size_t h = 0; h < plans.size(); ++h)
    out += csv_line({std::to_string(h + 1), fmt(plans[h].curvature), std::to_string(motion[h])});
  return out;
}

inline std::string plans_csv(const std::vector<TrajectoryPlan>& plans) {
  std::string out = csv_line({"h", "l", "a", "e", "omega", "v", "delta"});
  for (std::size_t h = 0; h < plans.size(); ++h)
    for (std::size_t l = 0; l < plans[h].controls.size(); ++l) {
      const auto& s = plans[h].states[l];
      const auto& u = plans[h].controls[l];
      out += csv_line({std::to_string(h + 1), std::to_string(l + 1), fmt(s.a), fmt(s.e), fmt(s.omega), fmt(u.v),
                       fmt(u.delta)});
    }
  return out;
}

struct SeedRuns {
  std::uint64_t seed = 0;
  double power_budget = 0.0;
  std::vector<MethodRun> runs;
};

inline std::string results_csv(const std::vector<SeedRuns>& all, int num_modalities) {
  std::string out = csv_line({"seed", "power_budget_w", "method", "modality", "status", "mean_mse", "mean_psnr_db",
                              "worst_mse", "worst_normalized", "power_used_w"});
  for (const auto& s : all)
    for (const auto& r : s.runs)
      for (int m = 0; m < num_modalities; ++m) {
        std::vector<std::string> row{std::to_string(s.seed), fmt(s.power_budget), method_name(r.method),
                                     std::to_string(m + 1)};
        if (r.ok) {
          row.insert(row.end(), {"ok", fmt(r.metrics.mean_mse[m]), fmt(r.metrics.mean_psnr[m]),
                                 fmt(r.metrics.mse.row(m).maxCoeff()), fmt(r.metrics.worst_normalized),
                                 fmt(r.metrics.power_used)});
        } else {
          row.insert(row.end(), {"failed", "", "", "", "", ""});
        }
        out += csv_line(row);
      }
  return out;
}

inline std::string timing_csv(const std::vector<SeedRuns>& all) {
  std::string out = csv_line({"seed", "power_budget_w", "method", "decision_s"});
  for (const auto& s : all)
    for (const auto& r : s.runs)
      out += csv_line({std::to_string(s.seed), fmt(s.power_budget), method_name(r.method), fmt(r.decision_seconds)});
  return out;
}

/// Per (budget, method, modality) means over seeds of successful runs.
inline std::string method_means_csv(const std::vector<SeedRuns>& all, int num_modalities) {
  struct Acc {
    double mse = 0, psnr = 0, worst = 0;
    int n = 0;
  };
  std::map<std::tuple<double, int, int>, Acc> acc;
  for (const auto& s : all)
    for (const auto& r : s.runs)
      if (r.ok)
        for (int m = 0; m < num_modalities; ++m) {
          auto& a = acc[{s.power_budget, static_cast<int>(r.method), m}];
          a.mse += r.metrics.mean_mse[m];
          a.psnr += r.metrics.mean_psnr[m];
          a.worst += r.metrics.worst_normalized;
          ++a.n;
        }
  std::string out = csv_line({"power_budget_w", "method", "modality", "seeds", "mse", "psnr_db", "worst_normalized"});
  for (const auto& [key, a] : acc)
    out += csv_line({fmt(std::get<0>(key)), method_name(static_cast<Method>(std::get<1>(key))),
                     std::to_string(std::get<2>(key) + 1), std::to_string(a.n), fmt(a.mse / a.n), fmt(a.psnr / a.n),
                     fmt(a.worst / a.n)});
  return out;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, int num_modalities) {
  std::vector<std::string> head{"parameter", "value", "power_budget_w", "seed", "status"};
  for (int m = 0; m < num_modalities; ++m) head.push_back("mse_" + std::to_string(m + 1));
  for (int m = 0; m < num_modalities; ++m) head.push_back("psnr_db_" + std::to_string(m + 1));
  head.push_back("worst_normalized");
  std::string out = csv_line(head);
  for (const auto& r : rows) {
    std::vector<std::string> row{r.parameter, fmt(r.value), fmt(r.power_budget), std::to_string(r.seed),
                                 r.ok ? "ok" : "failed"};
    for (int m = 0; m < num_modalities; ++m) row.push_back(r.ok ? fmt(r.mean_mse[m]) : "");
    for (int m = 0; m < num_modalities; ++m) row.push_back(r.ok ? fmt(r.mean_psnr[m]) : "");
    row.push_back(r.ok ? fmt(r.worst_normalized) : "");
    out += csv_line(row);
  }
  return out;
}

inline std::string training_csv(const TrainReport& rep) {
  std::string out = csv_line({"epoch", "train_loss", "test_loss", "train_r2", "test_r2"});
  for (const auto& e : rep.trace)
    out += csv_line({std::to_string(e.epoch), fmt(e.train_loss), fmt(e.test_loss), fmt(e.train_r2), fmt(e.test_r2)});
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

inline std::vector<SeedRuns> run_seeds(const SystemConfig& cfg, std::uint64_t first_seed, int seeds,
                                       const std::vector<double>& budgets, const std::vector<Method>& methods,
                                       const MlpModel* model, int jobs) {
  auto per_seed = parallel_map(seeds, jobs, [&](int i) {
    const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(i);
    const SyntheticScene scene = make_scene(cfg, seed);
    std::vector<SeedRuns> out;
    for (double b : budgets) {
      SystemConfig c = cfg;
      c.power_budget = b;
      const SceneInputs in = scene_inputs(scene, c);
      SeedRuns sr{seed, b, {}};
      for (Method m : methods) sr.runs.push_back(run_pipeline(scene, in, m, c, model));
      out.push_back(std::move(sr));
    }
    return out;
  });
  std::vector<SeedRuns> flat;
  // budget-major so tables read per budget
  for (std::size_t b = 0; b < budgets.size(); ++b)
    for (auto& s : per_seed) flat.push_back(std::move(s[b]));
  return flat;
}

inline std::vector<Method> parse_methods(const std::vector<std::string>& names, bool have_model) {
  if (names.empty() || (names.size() == 1 && names[0] == "all")) return all_methods(have_model);
  std::vector<Method> out;
  for (const auto& n : names) {
    const Method m = parse_method(n);
    if (m == Method::lto && !have_model) throw Error(ErrorKind::invalid_argument, "method lto requires --model");
    out.push_back(m);
  }
  return out;
}

inline int cmd_gen_scenario(const Context& ctx, const fs::path& out_dir, bool frames) {
  const SyntheticScene scene = make_scene(ctx.cfg, ctx.seed);
  const SceneInputs in = scene_inputs(scene, ctx.cfg);
  std::vector<std::string> outputs{"features.json", "sci.csv", "curvature.csv", "plans.csv", "config.json"};
  atomic_write(out_dir / "features.json", dump(features_to_json(in.features)));
  atomic_write(out_dir / "sci.csv", sci_csv(in.sci_raw, in.features.sci_norm));
  atomic_write(out_dir / "curvature.csv", curvature_csv(scene.plans, in.features.motion));
  atomic_write(out_dir / "plans.csv", plans_csv(scene.plans));
  atomic_write(out_dir / "config.json", dump(config_to_json(ctx.cfg)));
  if (frames)
    for (std::size_t m = 0; m < scene.frames.size(); ++m) {
      std::ostringstream os;
      write_frames(os, scene.frames[m]);
      const std::string name = "frames_m" + std::to_string(m + 1) + ".bin";
      atomic_write(out_dir / name, os.str());
      outputs.push_back(name);
    }
  for (const auto& w : in.warnings) std::cerr << "warning: " << w << "\n";
  write_manifest(out_dir, ctx, outputs);
  return ok;
}

inline int cmd_solve(const Context& ctx, const fs::path& features_path, const fs::path& out, const std::string& solver,
                     std::ostream& os) {
  const ScenarioFeatures f = load_features(features_path);
  check_features_against(f, ctx.cfg);
  const GpProblem prob = make_problem(f, ctx.cfg);
  check_feasible(prob);
  const SolveResult r = solve(prob, solver == "barrier" ? SolverKind::barrier : SolverKind::bisect);
  atomic_write(out, dump(result_to_json(r)));
  fs::path timing = out;
  timing += ".timing.json";
  atomic_write(timing, seconds_json({{"solve_s", r.solve_time}}));
  write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), ctx, {out.filename().string()});
  os << "objective " << fmt(r.objective) << " (" << r.solver << ", " << r.iterations << " iterations)\n";
  return ok;
}

struct TrainArgs {
  int scenarios = 1;
  int horizon = 10137;
  long train_size = 10000;
  bool gain_features = false;
  TrainConfig train;
};

inline int cmd_train(const Context& ctx, const fs::path& out_dir, const TrainArgs& a, std::ostream& os) {
  SystemConfig dcfg = ctx.cfg;
  dcfg.num_subdurations = a.horizon;
  Rng rng(ctx.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = generate_dataset(a.scenarios, dcfg, rng, a.gain_features);
  const double gen_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (ds.skipped_scenarios) os << "skipped " << ds.skipped_scenarios << " infeasible scenarios\n";
  const DatasetSplit split = split_dataset(ds, a.train_size);
  Rng init(ctx.seed ^ 0x5bd1e995ULL);
  MlpModel model = make_mlp(ctx.cfg.num_modalities, a.gain_features, init);
  TrainConfig tc = a.train;
  tc.rng_seed = ctx.seed;
  const TrainReport rep = train(model, split, tc);

  DatasetManifest man{ctx.cfg.num_modalities, a.gain_features, static_cast<long>(ds.size()), a.train_size,
                      a.scenarios, ds.skipped_scenarios, ctx.seed, "dataset.csv"};
  atomic_write(out_dir / "dataset.csv", dataset_to_csv(ds));
  atomic_write(out_dir / "dataset.json", dump(manifest_to_json(man)));
  save_model(out_dir / "model.json", model);
  atomic_write(out_dir / "training.csv", training_csv(rep));
  const auto& last = rep.trace.back();
  atomic_write(out_dir / "metrics.json", dump(json{{"epochs", last.epoch},
                                                   {"train_loss", last.train_loss},
                                                   {"test_loss", last.test_loss},
                                                   {"train_r2", last.train_r2},
                                                   {"test_r2", last.test_r2},
                                                   {"test_r2_per_output", rep.test_r2_per_output},
                                                   {"gain_features", a.gain_features}}));
  atomic_write(out_dir / "train.timing.json", seconds_json({{"dataset_s", gen_s}, {"train_s", rep.seconds}}));
  write_manifest(out_dir, ctx, {"dataset.csv", "dataset.json", "model.json", "training.csv", "metrics.json"});
  os << "held-out R2 " << fmt(last.test_r2) << ", loss " << fmt(last.test_loss) << "\n";
  return ok;
}

inline int cmd_infer(const Context& ctx, const fs::path& model_path, const fs::path& features_path, const fs::path& out,
                     bool online, std::ostream& os) {
  const MlpModel model = load_model(model_path);
  const ScenarioFeatures f = load_features(features_path);
  check_features_against(f, ctx.cfg);
  const GpProblem prob = make_problem(f, ctx.cfg);
  check_feasible(prob);
  const InferenceResult r = online ? infer_online(model, f, ctx.cfg) : infer(model, f, ctx.cfg);
  const json j{{"mode", online ? "online" : "batch"},
               {"objective", allocation_objective(prob, r.allocation)},
               {"residuals",
                {{"max_rate_violation", rate_violation(prob, r.allocation)},
                 {"power_violation", budget_violation(prob, r.allocation)}}},
               {"allocation", allocation_to_json(r.allocation)},
               {"raw", allocation_to_json(r.raw)}};
  atomic_write(out, dump(j));
  fs::path timing = out;
  timing += ".timing.json";
  atomic_write(timing, seconds_json({{"inference_s", r.seconds}}));
  write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), ctx, {out.filename().string()});
  os << "objective " << fmt(j["objective"].get<double>()) << " in " << fmt(r.seconds * 1e3) << " ms\n";
  return ok;
}

struct SimArgs {
  int seeds = 20;
  int jobs = 1;
  bool plot_data = false;
  std::vector<std::string> methods;
  std::optional<fs::path> model;
  std::vector<double> budgets;
};

inline std::optional<MlpModel> maybe_model(const std::optional<fs::path>& p) {
  if (!p) return std::nullopt;
  return load_model(*p);
}

inline int cmd_simulate(const Context& ctx, const fs::path& out_dir, const SimArgs& a, std::ostream& os) {
  const auto model = maybe_model(a.model);
  const MlpModel* mp = model ? &*model : nullptr;
  const auto methods = parse_methods(a.methods, mp != nullptr);
  const auto all = run_seeds(ctx.cfg, ctx.seed, a.seeds, {ctx.cfg.power_budget}, methods, mp, a.jobs);
  std::vector<std::string> outputs{"results.csv", "summary.json"};
  atomic_write(out_dir / "results.csv", results_csv(all, ctx.cfg.num_modalities));
  atomic_write(out_dir / "results.timing.csv", timing_csv(all));

  json summary = json::object();
  for (std::size_t k = 0; k < methods.size(); ++k) {
    int best = 0, failed = 0;
    double worst_sum = 0.0;
    for (const auto& s : all) {
      const auto& r = s.runs[k];
      if (!r.ok) {
        ++failed;
        continue;
      }
      worst_sum += r.metrics.worst_normalized;
      bool is_best = true;
      for (const auto& o : s.runs)
        if (o.ok && o.metrics.worst_normalized < r.metrics.worst_normalized) is_best = false;
      best += is_best;
    }
    const int n = static_cast<int>(all.size()) - failed;
    summary[method_name(methods[k])] = {{"seeds", all.size()},
                                        {"failed", failed},
                                        {"best_worst_case_seeds", best},
                                        {"mean_worst_normalized", n ? worst_sum / n : 0.0}};
    os << method_name(methods[k]) << ": best on " << best << "/" << all.size() << " seeds, mean worst-case "
       << fmt(n ? worst_sum / n : 0.0) << "\n";
  }
  atomic_write(out_dir / "summary.json", dump(summary));

  if (a.plot_data) {
    const SyntheticScene scene = make_scene(ctx.cfg, ctx.seed);
    const SceneInputs in = scene_inputs(scene, ctx.cfg);
    atomic_write(out_dir / "fig1b_sci.csv", sci_csv(in.sci_raw, in.features.sci_norm));
    atomic_write(out_dir / "fig1c_curvature.csv", curvature_csv(scene.plans, in.features.motion));
    atomic_write(out_dir / "fig3ef_methods.csv", method_means_csv(all, ctx.cfg.num_modalities));
    outputs.insert(outputs.end(), {"fig1b_sci.csv", "fig1c_curvature.csv", "fig3ef_methods.csv"});
  }
  write_manifest(out_dir, ctx, outputs);
  return ok;
}

inline const std::vector<double> kDefaultBudgets{0.002, 0.005, 0.01, 0.02, 0.05};
inline const std::vector<double> kAlphaGrid{0.1, 0.5, 1.0, 2.0};
inline const std::vector<double> kThetaGrid{0.01, 0.07, 0.6};

inline int cmd_compare(const Context& ctx, const fs::path& out_dir, const SimArgs& a, std::ostream& os) {
  const auto model = maybe_model(a.model);
  const MlpModel* mp = model ? &*model : nullptr;
  const auto methods = parse_methods(a.methods, mp != nullptr);
  const auto budgets = a.budgets.empty() ? kDefaultBudgets : a.budgets;
  const auto all = run_seeds(ctx.cfg, ctx.seed, a.seeds, budgets, methods, mp, a.jobs);
  std::vector<std::string> outputs{"comparison.csv", "comparison_means.csv"};
  atomic_write(out_dir / "comparison.csv", results_csv(all, ctx.cfg.num_modalities));
  atomic_write(out_dir / "comparison_means.csv", method_means_csv(all, ctx.cfg.num_modalities));
  atomic_write(out_dir / "comparison.timing.csv", timing_csv(all));
  if (a.plot_data) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < a.seeds; ++i) seeds.push_back(ctx.seed + static_cast<std::uint64_t>(i));
    atomic_write(out_dir / "fig3ab_alpha.csv",
                 sweep_csv(alpha_sweep(kAlphaGrid, budgets, seeds, ctx.cfg), ctx.cfg.num_modalities));
    atomic_write(out_dir / "fig3cd_theta.csv",
                 sweep_csv(theta_sweep(kThetaGrid, budgets, seeds, ctx.cfg), ctx.cfg.num_modalities));
    atomic_write(out_dir / "fig3ef_methods.csv", method_means_csv(all, ctx.cfg.num_modalities));
    outputs.insert(outputs.end(), {"fig3ab_alpha.csv", "fig3cd_theta.csv", "fig3ef_methods.csv"});
    if (mp) {
      std::vector<SeedRuns> pair;
      for (const auto& s : all) {
        SeedRuns sr{s.seed, s.power_budget, {}};
        for (const auto& r : s.runs)
          if (r.method == Method::gp || r.method == Method::lto) sr.runs.push_back(r);
        pair.push_back(std::move(sr));
      }
      atomic_write(out_dir / "fig5cd_lto.csv", method_means_csv(pair, ctx.cfg.num_modalities));
      outputs.push_back("fig5cd_lto.csv");
    }
  }
  write_manifest(out_dir, ctx, outputs);
  os << "compared " << methods.size() << " methods over " << budgets.size() << " budgets and " << a.seeds
     << " seeds\n";
  return ok;
}

inline int cmd_bench(const Context& ctx, const fs::path& out_dir, int batch, const std::optional<fs::path>& model_path,
                     bool plot_data, std::ostream& os) {
  const auto model = maybe_model(model_path);
  Rng rng(ctx.seed);
  std::vector<ScenarioFeatures> inst;
  for (int i = 0; i < batch; ++i) inst.push_back(synth_scenario(ctx.cfg, rng).features);
  std::vector<std::pair<std::string, std::function<void(const ScenarioFeatures&)>>> methods{
      {"gp_barrier", [&](const ScenarioFeatures& f) { solve_barrier(make_problem(f, ctx.cfg)); }},
      {"gp_bisect", [&](const ScenarioFeatures& f) { solve_bisection(make_problem(f, ctx.cfg)); }},
      {"maxrate", [&](const ScenarioFeatures& f) { baseline_maxrate(f, ctx.cfg); }},
      {"fairness", [&](const ScenarioFeatures& f) { baseline_fairness(f, ctx.cfg); }},
      {"sts", [&](const ScenarioFeatures& f) { baseline_sts(f, ctx.cfg); }}};
  if (model) methods.push_back({"lto", [&](const ScenarioFeatures& f) { infer(*model, f, ctx.cfg); }});
  json j = json::object();
  std::string csv = csv_line({"method", "mean_ms"});
  for (const auto& [name, fn] : methods) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& f : inst) fn(f);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / batch;
    j[name] = {{"mean_ms", ms}, {"batch", batch}};
    csv += csv_line({name, fmt(ms)});
    os << name << ": " << fmt(ms) << " ms per instance\n";
  }
  atomic_write(out_dir / "bench.timing.json", dump(j));
  if (plot_data) atomic_write(out_dir / "fig5e_time.timing.csv", csv);
  write_manifest(out_dir, ctx, {});
  return ok;
}

// ---------------------------------------------------------------------------
// Entry point

inline const char* kFormatsHelp = R"(Files:
  config      JSON object; keys num_modalities, num_subdurations, frames_per_subduration,
              frame_period_s, bandwidths_hz, total_bandwidth_hz, noise_power_w, power_budget_w
              (average per sub-duration), data_volumes_bits, d_min, c_min, delta_d, delta_c, alpha,
              curvature_threshold_per_m, wheelbase_m, sci_floor, rng_seed, curvature_aggregation
              (mean|max). Unknown keys are rejected. Default path from $IPMC_CONFIG.
  features    JSON {volumes_bits: [M], sci_norm: [[H] x M], motion: [H], gains: [[H] x M] (linear)}
  result      JSON {solver, objective, epigraph, iterations, residuals, allocation: {d, c, p_w}}
  model       JSON {format: "ipmc-mlp", version, widths, layers: [{weight (row-major), bias}],
              input_mean, input_scale, target_mean, target_scale}
  *.timing.*  wall-clock sidecars, excluded from the determinism contract
Exit codes: 0 ok, 1 usage or input error, 2 infeasible problem, 3 numerical failure.)";

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Perception-motion-communication resource allocation for edge robotics", "ipmc"};
  app.footer(kFormatsHelp);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "config JSON (default: $IPMC_CONFIG, else built-in defaults)");
  app.add_option("--seed", seed, "RNG seed (default: config rng_seed, 2024)");

  auto* gen = app.add_subcommand("gen-scenario", "synthesize a route, MPC plans and a scene; write solver features");
  std::string gen_out = "run/scenario";
  bool gen_frames = false;
  gen->add_option("--out-dir,-o", gen_out, "run directory")->capture_default_str();
  gen->add_flag("--frames", gen_frames, "also write frame streams (IPMCFRM1 binary: magic, u32 m, N, H, L, f32 data)");
  gen->footer("Writes features.json, sci.csv (h, raw and normalized SCI), curvature.csv (h, theta, psi), "
              "plans.csv (h, l, a, e, omega, v, delta), config.json, manifest.json.");

  auto* solve_cmd = app.add_subcommand("solve", "solve the allocation problem for a features file");
  std::string solve_features, solve_out = "run/solve/result.json", solver_name = "barrier";
  solve_cmd->add_option("--features,-f", solve_features, "features JSON")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--out,-o", solve_out, "result JSON")->capture_default_str();
  solve_cmd->add_option("--solver", solver_name, "barrier | bisect")
      ->check(CLI::IsMember({"barrier", "bisect"}))
      ->capture_default_str();
  solve_cmd->footer("Writes the result JSON (allocation, objective, residuals), <out>.timing.json and manifest.json.");

  auto* train_cmd = app.add_subcommand("train", "generate a demonstration dataset and train the network");
  std::string train_out = "run/train";
  TrainArgs targs;
  train_cmd->add_option("--out-dir,-o", train_out, "run directory")->capture_default_str();
  train_cmd->add_option("--scenarios", targs.scenarios, "scenarios solved for the dataset")->capture_default_str();
  train_cmd->add_option("--horizon", targs.horizon, "sub-durations per scenario")->capture_default_str();
  train_cmd->add_option("--train-size", targs.train_size, "leading samples used for training")->capture_default_str();
  train_cmd->add_option("--epochs", targs.train.epochs)->capture_default_str();
  train_cmd->add_option("--lr", targs.train.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch", targs.train.batch_size)->capture_default_str();
  train_cmd->add_flag("--gain-features", targs.gain_features, "append per-modality channel gains (dB) to the input");
  train_cmd->footer("Writes dataset.csv (feature then target columns), dataset.json (dims, seed, split), model.json, "
                    "training.csv (per-epoch loss and R2), metrics.json, train.timing.json, manifest.json.");

  auto* infer_cmd = app.add_subcommand("infer", "allocate with a trained model and feasibility projection");
  std::string infer_model, infer_features, infer_out = "run/infer/result.json";
  bool infer_online_flag = false;
  infer_cmd->add_option("--model,-m", infer_model, "model JSON")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--features,-f", infer_features, "features JSON")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out,-o", infer_out, "result JSON")->capture_default_str();
  infer_cmd->add_flag("--online", infer_online_flag, "decide sub-durations one at a time with a running budget");
  infer_cmd->footer("Writes the result JSON (allocation, raw network output, objective, residuals), "
                    "<out>.timing.json and manifest.json.");

  SimArgs sim_args, cmp_args;
  std::string sim_out = "run/simulate", cmp_out = "run/compare";
  std::string sim_model, cmp_model;
  auto add_sim_opts = [](CLI::App* c, SimArgs& a, std::string& model) {
    c->add_option("--seeds", a.seeds, "number of scene seeds, starting at --seed")->capture_default_str();
    c->add_option("--jobs,-j", a.jobs, "worker threads (results merged in seed order)")->capture_default_str();
    c->add_option("--methods", a.methods, "gp lto maxrate fairness sts, or all");
    c->add_option("--model,-m", model, "model JSON enabling the lto method")->check(CLI::ExistingFile);
    c->add_flag("--plot-data", a.plot_data, "also write per-figure CSVs");
  };
  auto* sim_cmd = app.add_subcommand("simulate", "run the end-to-end pipeline on synthetic scenes");
  sim_cmd->add_option("--out-dir,-o", sim_out, "run directory")->capture_default_str();
  add_sim_opts(sim_cmd, sim_args, sim_model);
  sim_cmd->footer("Writes results.csv (seed, budget, method, modality, MSE, PSNR, worst-case normalized distortion, "
                  "power), summary.json, results.timing.csv, manifest.json; with --plot-data also fig1b_sci.csv, "
                  "fig1c_curvature.csv, fig3ef_methods.csv.");

  auto* cmp_cmd = app.add_subcommand("compare", "compare methods over a grid of power budgets");
  cmp_args.seeds = 5;
  cmp_cmd->add_option("--out-dir,-o", cmp_out, "run directory")->capture_default_str();
  cmp_cmd->add_option("--budgets", cmp_args.budgets, "average power budgets, W (default 0.002 0.005 0.01 0.02 0.05)");
  add_sim_opts(cmp_cmd, cmp_args, cmp_model);
  cmp_cmd->footer("Writes comparison.csv and comparison_means.csv (method x modality x budget -> MSE, PSNR), "
                  "comparison.timing.csv, manifest.json; with --plot-data also fig3ab_alpha.csv, fig3cd_theta.csv, "
                  "fig3ef_methods.csv and, with a model, fig5cd_lto.csv.");

  auto* bench_cmd = app.add_subcommand("bench", "time every allocator on a batch of random instances");
  std::string bench_out = "run/bench", bench_model;
  int bench_batch = 100;
  bool bench_plot = false;
  bench_cmd->add_option("--batch", bench_batch, "instances")->capture_default_str()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--out-dir,-o", bench_out, "run directory")->capture_default_str();
  bench_cmd->add_option("--model,-m", bench_model, "model JSON to include lto inference")->check(CLI::ExistingFile);
  bench_cmd->add_flag("--plot-data", bench_plot, "also write fig5e_time.timing.csv");
  bench_cmd->footer("Writes bench.timing.json (mean ms per instance per method) and manifest.json.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return usage;
  }

  try {
    Context ctx;
    for (int i = 1; i < argc; ++i) ctx.args.emplace_back(argv[i]);
    if (config_path.empty())
      if (const char* env = std::getenv(kConfigEnv); env && *env) config_path = env;
    if (!config_path.empty()) {
      ctx.cfg = load_config(config_path);
      ctx.config_source = config_path;
    }
    if (seed) ctx.cfg.rng_seed = *seed;
    ctx.seed = ctx.cfg.rng_seed;
    auto opt_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : fs::path(s); };

    if (*gen) {
      ctx.subcommand = "gen-scenario";
      return cmd_gen_scenario(ctx, gen_out, gen_frames);
    }
    if (*solve_cmd) {
      ctx.subcommand = "solve";
      return cmd_solve(ctx, solve_features, solve_out, solver_name, out);
    }
    if (*train_cmd) {
      ctx.subcommand = "train";
      return cmd_train(ctx, train_out, targs, out);
    }
    if (*infer_cmd) {
      ctx.subcommand = "infer";
      return cmd_infer(ctx, infer_model, infer_features, infer_out, infer_online_flag, out);
    }
    if (*sim_cmd) {
      ctx.subcommand = "simulate";
      sim_args.model = opt_path(sim_model);
      return cmd_simulate(ctx, sim_out, sim_args, out);
    }
    if (*cmp_cmd) {
      ctx.subcommand = "compare";
      cmp_args.model = opt_path(cmp_model);
      return cmd_compare(ctx, cmp_out, cmp_args, out);
    }
    if (*bench_cmd) {
      ctx.subcommand = "bench";
      return cmd_bench(ctx, bench_out, bench_batch, opt_path(bench_model), bench_plot, out);
    }
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return infeasible;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::numerical ? numerical : e.kind() == ErrorKind::infeasible ? infeasible : usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  return usage;
}

}  // namespace ipmc::cli

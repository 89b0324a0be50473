// Synthesize a scene, solve the allocation exactly, and compare against the
// baselines on the rendered frames.

#include "ipmc/ipmc.hpp"

#include <cstdio>

int main() {
  using namespace ipmc;
  SystemConfig cfg;  // 2 modalities, 20 sub-durations, 10 mW average budget
  const SyntheticScene scene = make_scene(cfg, 1);
  const SceneInputs in = scene_inputs(scene, cfg);

  const SolveResult gp = solve_barrier(make_problem(in.features, cfg));
  std::printf("GP objective C0 = %.4f (%d Newton steps, %.2f ms)\n", gp.objective, gp.iterations, gp.solve_time * 1e3);

  std::printf("%-9s %12s %12s %14s %10s\n", "method", "psnr0 [dB]", "psnr1 [dB]", "worst norm.", "power [W]");
  for (const MethodRun& r : compare_methods(scene, cfg)) {
    if (!r.ok) {
      std::printf("%-9s failed: %s\n", method_name(r.method).c_str(), r.error.c_str());
      continue;
    }
    std::printf("%-9s %12.2f %12.2f %14.5f %10.5f\n", method_name(r.method).c_str(), r.metrics.mean_psnr[0],
                r.metrics.mean_psnr[1], r.metrics.worst_normalized, r.metrics.power_used);
  }
}

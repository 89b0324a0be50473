// Straight, quarter turn, straight: MPC tracking, predicted curvature and
// the motion flags that tighten the down-sampling and compression bounds.

#include "ipmc/ipmc.hpp"

#include <cstdio>

int main() {
  using namespace ipmc;
  SystemConfig cfg;
  cfg.num_subdurations = 8;
  using K = SegmentKind;
  const std::vector<K> kinds{K::straight, K::straight, K::turn_left, K::turn_left,
                             K::turn_left, K::straight, K::straight, K::stop};
  const Route route = route_from_segments(kinds, std::vector<double>(8, 0.6), cfg.frames_per_subduration,
                                          cfg.frame_period, 2.0, cfg.wheelbase);
  const auto plans = plan_route(route, cfg);
  const auto psi = motion_vector(plan_curvatures(plans), cfg.curvature_threshold);

  std::printf("%2s %9s %10s %12s %4s %6s %6s\n", "h", "end x", "end y", "theta [1/m]", "psi", "d_min", "c_min");
  for (int h = 0; h < cfg.num_subdurations; ++h) {
    const RobotState& s = plans[h].states.back();
    std::printf("%2d %9.3f %10.3f %12.4f %4d %6.2f %6.2f\n", h, s.a, s.e, plans[h].curvature, psi[h],
                cfg.d_lower(psi[h]), cfg.c_lower(psi[h]));
  }
}

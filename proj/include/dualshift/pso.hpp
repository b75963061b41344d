/* Copyright 2026 The Dualshift Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Gradient-free particle swarm minimizer over a bounded box in R^3 (the
// per-class RGB offset space).

#ifndef DUALSHIFT_PSO_HPP
#define DUALSHIFT_PSO_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/rng.hpp"

namespace dualshift {

struct PSOConfig {
  int swarm_size = 50;
  int iterations = 50;
  double inertia = 0.729;
  double cognitive = 1.494;
  double social = 1.494;
  double velocity_clamp = 0.125;  // 0.5 * bounds by default
  double bounds = 0.25;           // search box is [-bounds, bounds]^3
  std::uint64_t seed = 1;
  bool pin_origin = true;  // particle 0 starts at the origin (no-harm guarantee)

  void validate() const {
    if (swarm_size < 2) throw ValidationError("PSOConfig: swarm_size must be >= 2");
    if (iterations < 1) throw ValidationError("PSOConfig: iterations must be >= 1");
    if (!(bounds > 0.0)) throw ValidationError("PSOConfig: bounds must be > 0");
    if (!(velocity_clamp > 0.0)) throw ValidationError("PSOConfig: velocity_clamp must be > 0");
  }
};

using Vec3 = std::array<double, 3>;

struct SwarmState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::vector<Vec3> personal_best;
  std::vector<double> personal_best_value;
  Vec3 global_best{};
  double global_best_value = 0.0;
  int iteration = 0;
};

struct PsoResult {
  Vec3 best_position{};
  double best_value = 0.0;
  std::vector<double> trace;  // best-so-far after init, then after each iteration
};

/// Standard PSO: v <- w v + c1 u1 (pbest - p) + c2 u2 (gbest - p), u1,u2 ~
/// U(0,1) per coordinate; velocities clamped, positions clipped to the box.
/// Deterministic given the seed; the trace is non-increasing.
inline PsoResult pso_minimize(const std::function<double(const Vec3&)>& objective,
                              const PSOConfig& cfg) {
  cfg.validate();
  const int n = cfg.swarm_size;
  const double b = cfg.bounds;
  const double vc = cfg.velocity_clamp;

  SwarmState s;
  s.positions.resize(n);
  s.velocities.resize(n);
  s.personal_best.resize(n);
  s.personal_best_value.assign(n, 0.0);

  Rng init_rng(derive_seed(cfg.seed, seed_stream::kPsoInit));
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) {
      s.positions[i][d] = init_rng.uniform(-b, b);
      s.velocities[i][d] = init_rng.uniform(-vc, vc);
    }
  }
  if (cfg.pin_origin) s.positions[0] = {0.0, 0.0, 0.0};

  auto evaluate = [&](const Vec3& p, int iteration) {
    const double v = objective(p);
    if (!std::isfinite(v))
      throw OptimizationError("pso_minimize: non-finite objective value", iteration);
    return v;
  };

  s.global_best_value = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double v = evaluate(s.positions[i], 0);
    s.personal_best[i] = s.positions[i];
    s.personal_best_value[i] = v;
    if (v < s.global_best_value) {
      s.global_best_value = v;
      s.global_best = s.positions[i];
    }
  }

  PsoResult result;
  result.trace.push_back(s.global_best_value);

  Rng vel_rng(derive_seed(cfg.seed, seed_stream::kPsoVelocity));
  for (int it = 1; it <= cfg.iterations; ++it) {
    s.iteration = it;
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) {
        const double u1 = vel_rng.uniform();
        const double u2 = vel_rng.uniform();
        double v = cfg.inertia * s.velocities[i][d] +
                   cfg.cognitive * u1 * (s.personal_best[i][d] - s.positions[i][d]) +
                   cfg.social * u2 * (s.global_best[d] - s.positions[i][d]);
        v = std::min(std::max(v, -vc), vc);
        s.velocities[i][d] = v;
        double p = s.positions[i][d] + v;
        s.positions[i][d] = std::min(std::max(p, -b), b);
      }
      const double val = evaluate(s.positions[i], it);
      if (val < s.personal_best_value[i]) {
        s.personal_best_value[i] = val;
        s.personal_best[i] = s.positions[i];
      }
      if (val < s.global_best_value) {
        s.global_best_value = val;
        s.global_best = s.positions[i];
      }
    }
    result.trace.push_back(s.global_best_value);
  }

  result.best_position = s.global_best;
  result.best_value = s.global_best_value;
  return result;
}

}  // namespace dualshift

#endif  // DUALSHIFT_PSO_HPP

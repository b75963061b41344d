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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dualshift/color.hpp"
#include "dualshift/pso.hpp"
#include "test_helpers.hpp"

using namespace dualshift;

namespace {

/// Dense-grid oracle over [-b, b]^3: the independent global-minimum check
/// for the PSO tests (41^3 nodes).
double grid_minimum(const std::function<double(const Vec3&)>& f, double b, Vec3* argmin) {
  const int n = 41;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        const Vec3 p = {-b + 2 * b * i / (n - 1), -b + 2 * b * j / (n - 1),
                        -b + 2 * b * l / (n - 1)};
        const double v = f(p);
        if (v < best) {
          best = v;
          if (argmin) *argmin = p;
        }
      }
  return best;
}

const PerceptualFn kZeroPerceptual = [](const Image&, const Image&) { return 0.0; };

}  // namespace

TEST_CASE("apply_color_offset shifts channels and honors the clamp flag") {
  Image x(3, 4, 4);
  for (float& v : x.data) v = 0.5f;
  x.data[0] = 0.98f;

  Image shifted = apply_color_offset(x, {0.1, -0.2, 0.0}, /*clamp=*/false);
  CHECK(shifted.data[0] == Catch::Approx(1.08f));
  CHECK(shifted.data[1] == Catch::Approx(0.6f));
  CHECK(shifted.data[16] == Catch::Approx(0.3f));
  CHECK(shifted.data[32] == Catch::Approx(0.5f));

  Image clamped = apply_color_offset(x, {0.1, -0.2, 0.0}, /*clamp=*/true);
  CHECK(clamped.data[0] == 1.0f);

  Image same = apply_color_offset(x, {0.0, 0.0, 0.0}, false);
  CHECK(same.data == x.data);

  Image gray(1, 4, 4);
  CHECK_THROWS_AS(apply_color_offset(gray, {0.1, 0.1, 0.1}, false), ValidationError);
}

TEST_CASE("noise_constraint_loss hinge arithmetic") {
  NoiseConstraintConfig cfg;  // tau1=28, tau2=0.92, tau3=0.04
  Rng rng(3);
  Image x = dualshift::testing::random_image(rng, 3, 16, 16);

  // Identity satisfies every threshold exactly.
  CHECK(noise_constraint_loss(x, x, cfg, kZeroPerceptual) == 0.0);

  // A tiny offset keeps psnr ~46dB and ssim ~1: all hinges inactive.
  Image near = x;
  for (float& v : near.data) v += 0.005f;
  CHECK(noise_constraint_loss(x, near, cfg, kZeroPerceptual) == 0.0);

  // Constructed psnr = 26 dB with tau1 = 28: hinge contributes 2.0.
  // Uniform difference d gives MSE d^2; 26 dB -> d = 10^(-26/20).
  const float d = static_cast<float>(std::pow(10.0, -26.0 / 20.0));
  Image off(3, 16, 16);
  for (float& v : off.data) v = 0.5f;
  Image offd = off;
  for (float& v : offd.data) v += d;
  NoiseConstraintConfig loose = cfg;
  loose.tau_ssim = -1.0;  // keep the other hinges quiet
  loose.tau_perceptual = 1e9;
  CHECK(noise_constraint_loss(off, offd, loose, kZeroPerceptual) ==
        Catch::Approx(2.0).margin(1e-4));

  Image wrong(3, 8, 8);
  CHECK_THROWS_AS(noise_constraint_loss(x, wrong, cfg, kZeroPerceptual), ValidationError);
}

TEST_CASE("color_objective reduces to summed ensemble CE at lambda=0") {
  LabeledDataset data = dualshift::testing::small_textures(3, 8, 51);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 2, 3, 9);
  std::vector<Image> samples(data.images.begin(), data.images.begin() + 5);

  NoiseConstraintConfig cfg;
  cfg.lambda = 0.0;
  const ColorOffset offset{0.05, -0.03, 0.02};
  const double obj = color_objective(offset, samples, 1, g, cfg, kZeroPerceptual);

  double expect = 0.0;
  for (const auto& s : samples) {
    const std::vector<Image> one = {apply_color_offset(s, offset, false)};
    expect += ensemble_loss(g, one, {1});
  }
  CHECK(obj == Catch::Approx(expect).epsilon(1e-9));
}

TEST_CASE("color_objective with zero offset and quiet hinges is the clean CE sum") {
  LabeledDataset data = dualshift::testing::small_textures(3, 8, 52);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 2, 3, 10);
  std::vector<Image> samples(data.images.begin(), data.images.begin() + 4);

  NoiseConstraintConfig cfg;  // zero offset meets every default threshold
  const double obj = color_objective({0, 0, 0}, samples, 2, g, cfg, kZeroPerceptual);
  double expect = 0.0;
  for (const auto& s : samples) expect += ensemble_loss(g, std::vector<Image>{s}, {2});
  CHECK(obj == Catch::Approx(expect).epsilon(1e-9));
}

TEST_CASE("color_objective is invariant to sample order") {
  LabeledDataset data = dualshift::testing::small_textures(3, 8, 53);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 2, 3, 11);
  std::vector<Image> samples(data.images.begin(), data.images.begin() + 5);
  NoiseConstraintConfig cfg;
  const ColorOffset offset{0.08, 0.0, -0.06};

  const double a = color_objective(offset, samples, 1, g, cfg, kZeroPerceptual);
  std::reverse(samples.begin(), samples.end());
  const double b = color_objective(offset, samples, 1, g, cfg, kZeroPerceptual);
  CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)));

  CHECK_THROWS_AS(color_objective(offset, {}, 1, g, cfg, kZeroPerceptual), ValidationError);
}

TEST_CASE("pso finds the sphere minimum against the grid oracle") {
  auto sphere = [](const Vec3& v) { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; };
  const double oracle = grid_minimum(sphere, 0.25, nullptr);
  CHECK(oracle == 0.0);  // grid contains the origin

  PSOConfig cfg;
  cfg.swarm_size = 50;
  cfg.iterations = 50;
  cfg.seed = 123;
  cfg.pin_origin = false;  // do not trivialize the sphere case
  const PsoResult r = pso_minimize(sphere, cfg);
  CHECK(r.best_value <= oracle + 1e-4);
}

TEST_CASE("pso locates a shifted optimum within 0.02 in every coordinate") {
  const Vec3 target = {0.1, -0.05, 0.2};
  auto shifted = [&](const Vec3& v) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) s += (v[d] - target[d]) * (v[d] - target[d]);
    return s;
  };
  Vec3 grid_arg{};
  const double oracle = grid_minimum(shifted, 0.25, &grid_arg);
  CHECK(oracle <= 1e-4);  // grid node near the optimum

  PSOConfig cfg;
  cfg.swarm_size = 50;
  cfg.iterations = 50;
  cfg.seed = 321;
  const PsoResult r = pso_minimize(shifted, cfg);
  for (int d = 0; d < 3; ++d) CHECK(std::abs(r.best_position[d] - target[d]) <= 0.02);
}

TEST_CASE("pso trace is monotone non-increasing on a rugged objective") {
  auto rugged = [](const Vec3& v) {
    return std::sin(40 * v[0]) * 0.3 + std::abs(v[1]) + std::cos(25 * v[2]) * 0.2 + v[0] * v[0];
  };
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PSOConfig cfg;
    cfg.swarm_size = 12;
    cfg.iterations = 25;
    cfg.seed = seed;
    const PsoResult r = pso_minimize(rugged, cfg);
    REQUIRE(r.trace.size() == 26);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
  }
}

TEST_CASE("pso is deterministic given the seed and validates config") {
  auto sphere = [](const Vec3& v) { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; };
  PSOConfig cfg;
  cfg.swarm_size = 10;
  cfg.iterations = 10;
  cfg.seed = 77;
  const PsoResult a = pso_minimize(sphere, cfg);
  const PsoResult b = pso_minimize(sphere, cfg);
  CHECK(a.best_value == b.best_value);
  CHECK(a.best_position == b.best_position);
  CHECK(a.trace == b.trace);

  PSOConfig bad = cfg;
  bad.swarm_size = 1;
  CHECK_THROWS_AS(pso_minimize(sphere, bad), ValidationError);
  bad = cfg;
  bad.iterations = 0;
  CHECK_THROWS_AS(pso_minimize(sphere, bad), ValidationError);
  bad = cfg;
  bad.bounds = 0.0;
  CHECK_THROWS_AS(pso_minimize(sphere, bad), ValidationError);

  CHECK_THROWS_AS(
      pso_minimize([](const Vec3&) { return std::numeric_limits<double>::quiet_NaN(); }, cfg),
      OptimizationError);
}

TEST_CASE("pso stays inside the bounds box") {
  auto edgy = [](const Vec3& v) { return -(v[0] + v[1] + v[2]); };  // pushes to +corner
  PSOConfig cfg;
  cfg.swarm_size = 8;
  cfg.iterations = 30;
  cfg.seed = 5;
  const PsoResult r = pso_minimize(edgy, cfg);
  for (int d = 0; d < 3; ++d) {
    CHECK(r.best_position[d] <= cfg.bounds + 1e-12);
    CHECK(r.best_position[d] >= -cfg.bounds - 1e-12);
  }
  CHECK(r.best_value == Catch::Approx(-0.75).margin(1e-9));
}

TEST_CASE("optimize_class_color subsampling, determinism, and no-harm") {
  LabeledDataset data = dualshift::testing::small_textures(3, 5, 54);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 2, 4, 12);
  std::vector<Image> class_samples;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.labels[i] == 0) class_samples.push_back(data.images[i]);
  REQUIRE(class_samples.size() == 5);

  const ShiftRule rule{1, 3};
  PSOConfig pso;
  pso.swarm_size = 8;
  pso.iterations = 6;
  pso.seed = 9;
  NoiseConstraintConfig nc;

  // n_p = 5, budget 1000: all five samples used.
  ClassColorResult r =
      optimize_class_color(class_samples, 0, rule, g, 1000, pso, nc, kZeroPerceptual, 42);
  CHECK(r.subsample == std::vector<int>{0, 1, 2, 3, 4});

  // Same seed, same answer.
  ClassColorResult r2 =
      optimize_class_color(class_samples, 0, rule, g, 1000, pso, nc, kZeroPerceptual, 42);
  CHECK(r.offset.dr == r2.offset.dr);
  CHECK(r.offset.dg == r2.offset.dg);
  CHECK(r.offset.db == r2.offset.db);

  // Origin particle: never worse than the zero offset.
  const double zero_obj =
      color_objective({0, 0, 0}, class_samples, rule.shift(0), g, nc, kZeroPerceptual);
  CHECK(r.objective_value <= zero_obj + 1e-12);

  // Bounded subsample when the budget is smaller than the class.
  ClassColorResult r3 =
      optimize_class_color(class_samples, 0, rule, g, 3, pso, nc, kZeroPerceptual, 42);
  CHECK(r3.subsample.size() == 3);
  for (std::size_t i = 1; i < r3.subsample.size(); ++i)
    CHECK(r3.subsample[i - 1] < r3.subsample[i]);

  // Offsets stay inside the search box.
  CHECK(std::abs(r.offset.dr) <= pso.bounds + 1e-12);
  CHECK(std::abs(r.offset.dg) <= pso.bounds + 1e-12);
  CHECK(std::abs(r.offset.db) <= pso.bounds + 1e-12);
}

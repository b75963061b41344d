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

#include "dualshift/metrics.hpp"
#include "test_helpers.hpp"

using namespace dualshift;

namespace {

Image constant_image(float v, int h = 16, int w = 16) {
  Image img(3, h, w);
  for (float& p : img.data) p = v;
  return img;
}

Image offset_image(const Image& a, float delta) {
  Image b = a;
  for (float& v : b.data) v += delta;  // pre-clamp arithmetic
  return b;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  Rng rng(2);
  Image a = dualshift::testing::random_image(rng, 3, 16, 16);
  // Uniform +0.5 difference: MSE 0.25 -> 10*log10(4) = 6.0206 dB.
  CHECK(psnr(a, offset_image(a, 0.5f)) == Catch::Approx(6.0206).margin(1e-3));
  // Uniform +0.1: MSE 0.01 -> 20 dB.
  CHECK(psnr(a, offset_image(a, 0.1f)) == Catch::Approx(20.0).margin(1e-3));
  // Identity: cap.
  CHECK(psnr(a, a) == kPsnrCap);
  Image wrong(3, 8, 8);
  CHECK_THROWS_AS(psnr(a, wrong), ValidationError);
}

TEST_CASE("psnr strictly decreases with uniform offset magnitude") {
  Rng rng(4);
  Image a = dualshift::testing::random_image(rng, 3, 12, 12);
  double prev = kPsnrCap;
  for (float off : {0.01f, 0.02f, 0.05f, 0.1f, 0.2f, 0.4f}) {
    const double v = psnr(a, offset_image(a, off));
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("ssim identity, constant-image oracle, and symmetry") {
  Rng rng(6);
  Image a = dualshift::testing::random_image(rng, 3, 16, 16);
  CHECK(ssim(a, a) == Catch::Approx(1.0).margin(1e-9));

  // Constant images: variances vanish, so SSIM reduces to the luminance
  // term (2 m1 m2 + C1) / (m1^2 + m2^2 + C1). Closed-form oracle.
  const double m1 = 0.3, m2 = 0.7, C1 = 1e-4;
  const double oracle = (2 * m1 * m2 + C1) / (m1 * m1 + m2 * m2 + C1);
  CHECK(oracle == Catch::Approx(0.7241).margin(5e-4));
  CHECK(ssim(constant_image(0.3f), constant_image(0.7f)) ==
        Catch::Approx(oracle).margin(1e-6));

  for (int t = 0; t < 10; ++t) {
    Image x = dualshift::testing::random_image(rng, 3, 16, 16);
    Image y = dualshift::testing::random_image(rng, 3, 16, 16);
    CHECK(ssim(x, y) == Catch::Approx(ssim(y, x)).margin(1e-12));
    const double v = ssim(x, y);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("ssim rejects images smaller than the window") {
  Image tiny(3, 4, 4);
  CHECK_THROWS_AS(ssim(tiny, tiny), ValidationError);
}

TEST_CASE("ssim equals one only for identical inputs") {
  Rng rng(7);
  Image a = dualshift::testing::random_image(rng, 3, 16, 16);
  Image b = a;
  b.data[40] += 0.2f;
  CHECK(ssim(a, b) < 1.0 - 1e-9);
}

TEST_CASE("perceptual distance: identity, monotonicity, unknown backend") {
  LabeledDataset data = dualshift::testing::small_textures(3, 8, 42);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 1, 3, 5);
  PerceptualRegistry reg = default_perceptual_registry(&g);

  Rng rng(9);
  Image a = dualshift::testing::random_image(rng);
  CHECK(perceptual_distance(a, a, "gallery-feature", reg) == 0.0);

  // Sampled monotonicity oracle: growing a fixed noise direction must not
  // shrink the distance, on at least 95% of trials.
  int ok = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Image base = dualshift::testing::random_image(rng);
    Image n1 = base, n2 = base;
    for (std::size_t i = 0; i < base.data.size(); ++i) {
      const float noise = static_cast<float>(rng.gaussian());
      n1.data[i] += 0.1f * noise;
      n2.data[i] += 0.2f * noise;
    }
    const double d1 = perceptual_distance(base, n1, "gallery-feature", reg);
    const double d2 = perceptual_distance(base, n2, "gallery-feature", reg);
    if (d2 >= d1) ++ok;
  }
  CHECK(ok >= 95);

  CHECK_THROWS_AS(perceptual_distance(a, a, "foo", reg), ConfigError);
}

TEST_CASE("perceptual distance is symmetric and non-negative") {
  LabeledDataset data = dualshift::testing::small_textures(3, 8, 43);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 1, 3, 6);
  PerceptualRegistry reg = default_perceptual_registry(&g);
  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    Image a = dualshift::testing::random_image(rng);
    Image b = dualshift::testing::random_image(rng);
    const double ab = perceptual_distance(a, b, "gallery-feature", reg);
    const double ba = perceptual_distance(b, a, "gallery-feature", reg);
    CHECK(ab >= 0.0);
    CHECK(ab == Catch::Approx(ba).margin(1e-9));
  }
}

TEST_CASE("external perceptual backends can be registered") {
  PerceptualRegistry reg;
  reg.register_backend("l2", [](const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const double d = double(a.data[i]) - double(b.data[i]);
      s += d * d;
    }
    return std::sqrt(s);
  });
  Rng rng(11);
  Image a = dualshift::testing::random_image(rng);
  CHECK(perceptual_distance(a, a, "l2", reg) == 0.0);
  CHECK(reg.has("l2"));
  CHECK_FALSE(reg.has("gallery-feature"));
}

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

#include "dualshift/spatial.hpp"
#include "test_helpers.hpp"

using namespace dualshift;

namespace {

/// A linear-head "model" with constant positive input gradient: the linear
/// layer weights are all w > 0 on class-0 logit so d(CE toward class 1)/dx
/// has a fixed sign everywhere. Easier: zero conv weights and craft the
/// linear layer so logits = (s, -s) with s = w * sum(relu(conv(x))) ... a
/// constant-gradient construction is cleaner via a hand-built gallery whose
/// single member is a toy net with identity-ish conv. See constant_gradient
/// comments below.
std::shared_ptr<Classifier> constant_gradient_model(Shape3 in) {
  // conv (3->4): zero weights, bias so that outputs are strictly positive
  // constants; relu passes them; linear: class 0 collects +w * sum(x-free
  // shift)... A conv with zero weights kills the input dependence, so
  // instead use weights that copy channel 0 (kernel center 1) plus a large
  // positive bias keeping relu in its linear region for inputs in [-2, 2].
  auto model = std::make_shared<Classifier>("toy", in, 2, 1);
  ConvNet& net = model->net();
  {
    float* p = net.layer(0).param_data();
    const std::size_t wn = 4 * in.c * 9;
    for (std::size_t i = 0; i < wn; ++i) p[i] = 0.0f;
    for (int oc = 0; oc < 4; ++oc) {
      // center tap of input channel 0
      p[(std::size_t(oc) * in.c + 0) * 9 + 4] = 1.0f;
      p[wn + oc] = 8.0f;  // bias keeps pre-activations positive
    }
  }
  {
    float* p = net.layer(2).param_data();
    const std::size_t D = net.layer(2).in_shape().numel();
    for (std::size_t i = 0; i < 2 * D + 2; ++i) p[i] = 0.0f;
    for (std::size_t d = 0; d < D; ++d) p[d] = 0.01f;  // class-0 logit = 0.01*sum
  }
  return model;
}

ModelGallery single(std::shared_ptr<Classifier> m) {
  ModelGallery g;
  g.members = {std::move(m)};
  g.provenance = {"constructed"};
  return g;
}

}  // namespace

TEST_CASE("shift_label modular arithmetic") {
  CHECK(shift_label(2, {3, 10}) == 5);
  CHECK(shift_label(9, {3, 10}) == 2);
  CHECK(shift_label(4, {0, 10}) == 4);
  CHECK(shift_label(1, {-3, 10}) == 8);   // negative offsets reduce mod k
  CHECK(shift_label(1, {23, 10}) == 4);   // offsets beyond k reduce mod k
  CHECK_THROWS_AS(shift_label(10, {3, 10}), ValidationError);
  CHECK_THROWS_AS(shift_label(-1, {3, 10}), ValidationError);
}

TEST_CASE("shift_label is a bijection for every delta and k <= 100") {
  for (int k = 1; k <= 100; ++k) {
    for (int dy = -2 * k; dy <= 2 * k; ++dy) {
      std::vector<bool> hit(k, false);
      ShiftRule rule{dy, k};
      for (int y = 0; y < k; ++y) {
        const int target = rule.shift(y);
        REQUIRE(target >= 0);
        REQUIRE(target < k);
        REQUIRE_FALSE(hit[target]);
        hit[target] = true;
      }
    }
  }
}

TEST_CASE("project_linf clips into the box and is idempotent") {
  Image x0(3, 4, 4);
  for (float& v : x0.data) v = 0.5f;
  Image x = x0;
  x.data[0] = 0.6f;
  const double eps = 8.0 / 255.0;
  Image p = project_linf(x, x0, eps);
  CHECK(p.data[0] == Catch::Approx(0.5 + 8.0 / 255.0).epsilon(1e-6));

  // Inside the ball: unchanged.
  x.data[0] = 0.51f;
  p = project_linf(x, x0, eps);
  CHECK(p.data[0] == 0.51f);

  // Idempotence on random inputs.
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    Image r(3, 4, 4);
    for (float& v : r.data) v = static_cast<float>(rng.uniform(-1.0, 2.0));
    Image once = project_linf(r, x0, eps);
    Image twice = project_linf(once, x0, eps);
    CHECK(once.data == twice.data);
  }

  Image wrong(3, 2, 2);
  CHECK_THROWS_AS(project_linf(wrong, x0, eps), ValidationError);
}

TEST_CASE("PGD with a constant-gradient model saturates to -epsilon") {
  Shape3 in{3, 6, 6};
  ModelGallery g = single(constant_gradient_model(in));

  // Class-0 logit grows with channel-0 pixels; CE toward class 1 therefore
  // has strictly positive gradient on channel 0 and zero elsewhere.
  Image x(3, 6, 6);
  for (float& v : x.data) v = 0.5f;
  PGDConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.beta = 0.5;
  cfg.steps = 5;
  SpatialPerturbation d = pgd_toward_shift_label(x, 0, g, {1, 2}, cfg);

  const int plane = 36;
  for (int i = 0; i < plane; ++i)
    CHECK(d.delta.data[i] == Catch::Approx(-cfg.epsilon).margin(1e-7));
  // Channels 1..2 carry no gradient: sign(0) = 0 keeps them untouched.
  for (std::size_t i = plane; i < d.delta.data.size(); ++i) CHECK(d.delta.data[i] == 0.0f);
}

TEST_CASE("PGD leaves inputs untouched under a zero-gradient gallery") {
  Shape3 in{3, 6, 6};
  auto model = std::make_shared<Classifier>("toy", in, 2, 1);
  for (std::size_t l = 0; l < model->net().num_layers(); ++l) {
    float* p = model->net().layer(l).param_data();
    for (std::size_t i = 0; i < model->net().layer(l).param_count(); ++i) p[i] = 0.0f;
  }
  ModelGallery g = single(model);

  Rng rng(5);
  Image x = dualshift::testing::random_image(rng, 3, 6, 6);
  PGDConfig cfg;
  cfg.steps = 4;
  SpatialPerturbation d = pgd_toward_shift_label(x, 1, g, {1, 2}, cfg);
  for (float v : d.delta.data) CHECK(v == 0.0f);
}

TEST_CASE("PGD respects the epsilon bound for every config") {
  LabeledDataset data = dualshift::testing::small_textures(3, 12, 71);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 2, 4, 3);
  Rng rng(9);
  for (const double eps : {2.0 / 255.0, 8.0 / 255.0, 0.1}) {
    for (const char* mode : {"absolute", "relative"}) {
      PGDConfig cfg;
      cfg.epsilon = eps;
      cfg.beta = std::string(mode) == "relative" ? 0.1 : 0.5;
      cfg.beta_mode = mode;
      cfg.steps = 6;
      const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(data.size())));
      SpatialPerturbation d =
          pgd_toward_shift_label(data.images[idx], data.labels[idx], g, {1, 3}, cfg);
      CHECK(d.linf() <= eps + 1e-6);
    }
  }
}

TEST_CASE("PGD is deterministic and batch equals per-sample execution") {
  LabeledDataset data = dualshift::testing::small_textures(3, 10, 72);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 2, 4, 5);
  PGDConfig cfg;
  cfg.steps = 5;

  std::vector<Image> batch(data.images.begin(), data.images.begin() + 6);
  std::vector<int> labels(data.labels.begin(), data.labels.begin() + 6);
  const auto da = pgd_toward_shift_label_batch(batch, labels, g, {1, 3}, cfg);
  const auto db = pgd_toward_shift_label_batch(batch, labels, g, {1, 3}, cfg);
  REQUIRE(da.size() == db.size());
  for (std::size_t i = 0; i < da.size(); ++i) CHECK(da[i].delta.data == db[i].delta.data);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    SpatialPerturbation one = pgd_toward_shift_label(batch[i], labels[i], g, {1, 3}, cfg);
    CHECK(one.delta.data == da[i].delta.data);
  }
}

TEST_CASE("PGD beats random perturbations of equal norm on a trained gallery") {
  LabeledDataset data = dualshift::testing::small_textures(4, 32, 73);
  ModelGallery g = dualshift::testing::small_trained_gallery(data, 2, 6, 7);
  const ShiftRule rule{1, 4};
  PGDConfig cfg;
  cfg.steps = 10;

  std::vector<Image> batch;
  std::vector<int> labels;
  for (int i = 0; i < 64; ++i) {
    batch.push_back(data.images[i * 2 % data.size()]);
    labels.push_back(data.labels[i * 2 % data.size()]);
  }
  std::vector<int> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = rule.shift(labels[i]);

  const auto deltas = pgd_toward_shift_label_batch(batch, labels, g, rule, cfg);

  // Random +-epsilon sign noise: the equal-norm baseline oracle.
  Rng rng(11);
  int pgd_wins = 0;
  double before_total = 0.0, after_total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Image adv = batch[i];
    Image rnd = batch[i];
    for (std::size_t j = 0; j < adv.data.size(); ++j) {
      adv.data[j] += deltas[i].delta.data[j];
      rnd.data[j] += static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * cfg.epsilon);
    }
    const std::vector<int> t = {targets[i]};
    const double loss_before = ensemble_loss(g, std::vector<Image>{batch[i]}, t);
    const double loss_pgd = ensemble_loss(g, std::vector<Image>{adv}, t);
    const double loss_rnd = ensemble_loss(g, std::vector<Image>{rnd}, t);
    before_total += loss_before;
    after_total += loss_pgd;
    if (loss_pgd < loss_rnd) ++pgd_wins;
  }
  CHECK(after_total <= before_total);                       // mean loss decreased
  CHECK(pgd_wins >= static_cast<int>(0.9 * batch.size()));  // beats random on >= 90%
}

TEST_CASE("PGD validates configuration") {
  PGDConfig cfg;
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = PGDConfig{};
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = PGDConfig{};
  cfg.beta_mode = "sideways";
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

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

// Color branch: one scalar luminance offset per RGB channel, shared by every
// sample of a class, found by PSO against the ensemble cross-entropy toward
// the shift-induced label plus hinge noise constraints.

#ifndef DUALSHIFT_COLOR_HPP
#define DUALSHIFT_COLOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/metrics.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/pso.hpp"
#include "dualshift/rng.hpp"
#include "dualshift/spatial.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

struct ColorOffset {
  double dr = 0.0, dg = 0.0, db = 0.0;

  bool is_zero() const { return dr == 0.0 && dg == 0.0 && db == 0.0; }
  Vec3 as_vec() const { return {dr, dg, db}; }
  static ColorOffset from_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }
};

struct NoiseConstraintConfig {
  double tau_psnr = 28.0;        // dB floor
  double tau_ssim = 0.92;        // SSIM floor
  double tau_perceptual = 0.04;  // perceptual ceiling
  double lambda = 1.0;

  void validate() const {
    if (lambda < 0.0) throw ValidationError("NoiseConstraintConfig: lambda must be >= 0");
  }
};

/// Shifts each channel by its offset; clamps to [0,1] only when asked (the
/// generator clamps once at the very end).
inline Image apply_color_offset(const Image& x, const ColorOffset& offset, bool clamp) {
  if (x.channels != 3)
    throw ValidationError("apply_color_offset: need a 3-channel image, got " +
                          std::to_string(x.channels));
  Image out = x;
  const int plane = x.height * x.width;
  const float d[3] = {static_cast<float>(offset.dr), static_cast<float>(offset.dg),
                      static_cast<float>(offset.db)};
  for (int c = 0; c < 3; ++c) {
    float* p = out.data.data() + std::size_t(c) * plane;
    for (int i = 0; i < plane; ++i) p[i] += d[c];
  }
  if (clamp) clamp_in_place(out, 0.0f, 1.0f);
  return out;
}

/// max(0, tau1 - psnr) + max(0, tau2 - ssim) + max(0, perceptual - tau3).
/// Zero when every threshold is met.
inline double noise_constraint_loss(const Image& x, const Image& xp,
                                    const NoiseConstraintConfig& cfg,
                                    const PerceptualFn& perceptual) {
  if (!x.same_shape(xp)) throw ValidationError("noise_constraint_loss: shape mismatch");
  cfg.validate();
  const double p = psnr(x, xp);
  const double s = ssim(x, xp);
  const double l = perceptual(x, xp);
  return std::max(0.0, cfg.tau_psnr - p) + std::max(0.0, cfg.tau_ssim - s) +
         std::max(0.0, l - cfg.tau_perceptual);
}

/// Sum over samples of [ensemble CE toward y_star + lambda * noise
/// constraint], with one shared offset. Samples must all belong to the class
/// being perturbed. Fixed-order double accumulation.
inline double color_objective(const ColorOffset& offset, const std::vector<Image>& samples,
                              int y_star, const ModelGallery& gallery,
                              const NoiseConstraintConfig& cfg, const PerceptualFn& perceptual) {
  if (samples.empty()) throw ValidationError("color_objective: empty sample list");
  cfg.validate();
  gallery.validate();
  const int batch = static_cast<int>(samples.size());

  std::vector<Image> shifted(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    shifted[i] = apply_color_offset(samples[i], offset, /*clamp=*/false);
  const std::vector<float> x = pack_images(shifted);
  const std::vector<int> targets(samples.size(), y_star);

  // Per-sample ensemble CE: mean over members of that sample's CE.
  std::vector<double> ce(samples.size(), 0.0);
  std::vector<double> per_sample(samples.size());
  for (const auto& m : gallery.members) {
    const std::vector<float> z = m->logits(x, batch);
    softmax_cross_entropy(z.data(), targets.data(), batch, m->num_classes(), per_sample.data(),
                          nullptr, 0.0f);
    for (std::size_t i = 0; i < ce.size(); ++i) ce[i] += per_sample[i];
  }
  const double inv_m = 1.0 / double(gallery.size());

  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += ce[i] * inv_m;
    if (cfg.lambda > 0.0)
      total += cfg.lambda * noise_constraint_loss(samples[i], shifted[i], cfg, perceptual);
  }
  return total;
}

struct ClassColorResult {
  ColorOffset offset;
  double objective_value = 0.0;
  std::vector<double> trace;
  std::vector<int> subsample;  // indices into the class sample list
};

/// Draws min(N, n_p) class samples (seeded, without replacement, kept in
/// ascending order), builds the objective toward shift_label(y), and runs
/// PSO. The returned offset is later applied to every sample of the class.
inline ClassColorResult optimize_class_color(const std::vector<Image>& class_samples, int y,
                                             const ShiftRule& rule, const ModelGallery& gallery,
                                             int sample_budget, const PSOConfig& pso_cfg,
                                             const NoiseConstraintConfig& nc_cfg,
                                             const PerceptualFn& perceptual,
                                             std::uint64_t subsample_seed) {
  if (class_samples.empty()) throw ValidationError("optimize_class_color: empty class");
  if (sample_budget < 1) throw ValidationError("optimize_class_color: sample budget must be >= 1");

  const int n = static_cast<int>(class_samples.size());
  const int take = std::min(sample_budget, n);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(subsample_seed);
  for (int i = 0; i < take; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());

  std::vector<Image> subsample;
  subsample.reserve(take);
  for (int i : idx) subsample.push_back(class_samples[i]);

  const int y_star = rule.shift(y);
  auto objective = [&](const Vec3& v) {
    return color_objective(ColorOffset::from_vec(v), subsample, y_star, gallery, nc_cfg,
                           perceptual);
  };
  const PsoResult pso = pso_minimize(objective, pso_cfg);

  ClassColorResult result;
  result.offset = ColorOffset::from_vec(pso.best_position);
  result.objective_value = pso.best_value;
  result.trace = pso.trace;
  result.subsample = std::move(idx);
  return result;
}

}  // namespace dualshift

#endif  // DUALSHIFT_COLOR_HPP

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

// Spatial branch: per-sample l-infinity-bounded perturbations from T steps of
// signed gradient descent on the ensemble cross-entropy toward the
// shift-induced label, projected back into the epsilon box after every step.

#ifndef DUALSHIFT_SPATIAL_HPP
#define DUALSHIFT_SPATIAL_HPP

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

/// Maps a true label to its shift-induced target (y + delta) mod k.
struct ShiftRule {
  int delta_y = 3;
  int num_classes = 0;

  int shift(int y) const {
    if (num_classes < 1) throw ValidationError("ShiftRule: class count not set");
    if (y < 0 || y >= num_classes)
      throw ValidationError("ShiftRule: label " + std::to_string(y) + " outside [0," +
                            std::to_string(num_classes) + ")");
    const int d = ((delta_y % num_classes) + num_classes) % num_classes;
    return (y + d) % num_classes;
  }
};

inline int shift_label(int y, const ShiftRule& rule) { return rule.shift(y); }

struct PGDConfig {
  double epsilon = 8.0 / 255.0;
  double beta = 0.5;
  int steps = 30;
  // "absolute": the step is beta pixel units (saturates the epsilon box
  // quickly; accepted behavior). "relative": the step is beta * epsilon.
  std::string beta_mode = "absolute";

  double step() const { return beta_mode == "relative" ? beta * epsilon : beta; }

  void validate() const {
    if (!(epsilon > 0.0)) throw ValidationError("PGDConfig: epsilon must be > 0");
    if (!(beta > 0.0)) throw ValidationError("PGDConfig: beta must be > 0");
    if (steps < 1) throw ValidationError("PGDConfig: steps must be >= 1");
    if (beta_mode != "absolute" && beta_mode != "relative")
      throw ValidationError("PGDConfig: beta_mode must be 'absolute' or 'relative'");
  }
};

struct SpatialPerturbation {
  Image delta;

  double linf() const {
    double m = 0.0;
    for (float v : delta.data) m = std::max(m, std::abs(double(v)));
    return m;
  }
};

/// Clips x elementwise into [x0 - eps, x0 + eps]. Idempotent.
inline Image project_linf(const Image& x, const Image& x0, double eps) {
  if (!x.same_shape(x0)) throw ValidationError("project_linf: shape mismatch");
  if (!(eps > 0.0)) throw ValidationError("project_linf: epsilon must be > 0");
  Image out = x;
  const float e = static_cast<float>(eps);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float lo = x0.data[i] - e, hi = x0.data[i] + e;
    out.data[i] = std::min(std::max(out.data[i], lo), hi);
  }
  return out;
}

namespace detail {
inline float signf(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }
}

/// Batched PGD toward the shift-induced labels. Per-sample results are
/// bitwise identical to one-sample calls (the net is batch-invariant and
/// every update here is elementwise). No [0,1] clamp inside the loop; the
/// generator clamps once after combining both branches.
inline std::vector<SpatialPerturbation> pgd_toward_shift_label_batch(
    const std::vector<Image>& images, const std::vector<int>& labels, const ModelGallery& gallery,
    const ShiftRule& rule, const PGDConfig& cfg) {
  cfg.validate();
  gallery.validate();
  if (images.size() != labels.size())
    throw ValidationError("pgd: image/label count mismatch");
  if (images.empty()) return {};

  std::vector<int> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = rule.shift(labels[i]);

  const std::vector<float> x0 = pack_images(images);
  std::vector<float> x = x0;
  const float eps = static_cast<float>(cfg.epsilon);
  const float step = static_cast<float>(cfg.step());

  for (int t = 0; t < cfg.steps; ++t) {
    const std::vector<float> g = ensemble_input_gradient(gallery, x, targets);
    for (float v : g)
      if (!std::isfinite(v))
        throw OptimizationError("pgd: non-finite ensemble gradient", t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      float v = x[i] - step * detail::signf(g[i]);
      const float lo = x0[i] - eps, hi = x0[i] + eps;
      x[i] = std::min(std::max(v, lo), hi);
    }
  }

  const std::size_t numel = images[0].size();
  std::vector<SpatialPerturbation> out(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out[i].delta = Image(images[i].channels, images[i].height, images[i].width);
    for (std::size_t j = 0; j < numel; ++j)
      out[i].delta.data[j] = x[i * numel + j] - x0[i * numel + j];
  }
  return out;
}

inline SpatialPerturbation pgd_toward_shift_label(const Image& x, int y,
                                                  const ModelGallery& gallery,
                                                  const ShiftRule& rule, const PGDConfig& cfg) {
  return pgd_toward_shift_label_batch({x}, {y}, gallery, rule, cfg).front();
}

}  // namespace dualshift

#endif  // DUALSHIFT_SPATIAL_HPP

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

// Defenses for robustness evaluation: grayscale and JPEG squeezing,
// adversarial training, and the two adaptive (domain-aware) defenses.

#ifndef DUALSHIFT_DEFENSES_HPP
#define DUALSHIFT_DEFENSES_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/jpeg_codec.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/rng.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

enum class DefenseKind {
  kNone,
  kGrayscale,       // ISS-style grayscale squeeze
  kJpeg,            // ISS-style low-quality JPEG squeeze
  kAt,              // adversarial training
  kAdaptiveRandom,  // channel shifts + Gaussian pixel noise
  kAdaptiveChannelAt  // channel shifts + adversarial training
};

inline std::string defense_kind_name(DefenseKind k) {
  switch (k) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kGrayscale: return "grayscale";
    case DefenseKind::kJpeg: return "jpeg";
    case DefenseKind::kAt: return "at";
    case DefenseKind::kAdaptiveRandom: return "adaptive_random";
    case DefenseKind::kAdaptiveChannelAt: return "adaptive_channel_at";
  }
  return "?";
}

inline DefenseKind defense_kind_from_name(const std::string& s) {
  if (s == "none") return DefenseKind::kNone;
  if (s == "grayscale") return DefenseKind::kGrayscale;
  if (s == "jpeg") return DefenseKind::kJpeg;
  if (s == "at") return DefenseKind::kAt;
  if (s == "adaptive_random") return DefenseKind::kAdaptiveRandom;
  if (s == "adaptive_channel_at") return DefenseKind::kAdaptiveChannelAt;
  throw ConfigError("unknown defense kind '" + s + "'");
}

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  int jpeg_quality = 10;
  double at_epsilon = 8.0 / 255.0;  // epsilon_a
  int at_steps = 7;
  double r_c = 0.0, r_s = 0.0;  // adaptive_random radii
  double q_c = 0.0, q_s = 0.0;  // adaptive_channel_at radii
  bool refresh_per_epoch = false;  // adaptive_random redrawn per epoch
  bool uniform_spatial_noise = false;  // alternative reading of the random spatial noise
  std::uint64_t seed = 1;

  bool is_dataset_level() const {
    return kind == DefenseKind::kNone || kind == DefenseKind::kGrayscale ||
           kind == DefenseKind::kJpeg || kind == DefenseKind::kAdaptiveRandom;
  }
  bool is_training_level() const { return !is_dataset_level(); }

  void validate() const {
    if (jpeg_quality < 1 || jpeg_quality > 100)
      throw ValidationError("DefenseConfig: jpeg quality must be in [1,100]");
    if (r_c < 0.0 || r_s < 0.0 || q_c < 0.0 || q_s < 0.0)
      throw ValidationError("DefenseConfig: noise radii must be >= 0");
    if (at_steps < 1) throw ValidationError("DefenseConfig: at_steps must be >= 1");
    if (!(at_epsilon > 0.0)) throw ValidationError("DefenseConfig: at_epsilon must be > 0");
  }

  std::string label() const {
    switch (kind) {
      case DefenseKind::kJpeg: return "jpeg_q" + std::to_string(jpeg_quality);
      case DefenseKind::kAdaptiveRandom: {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "adaptive_random_rc%.3f_rs%.3f", r_c, r_s);
        return buf;
      }
      case DefenseKind::kAdaptiveChannelAt: {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "adaptive_channel_at_qc%.3f_qs%.3f", q_c, q_s);
        return buf;
      }
      default: return defense_kind_name(kind);
    }
  }
};

// ---------------------------------------------------------------------------
// Dataset-level transforms.

/// BT.601 luminance replicated to all three channels.
inline Image defense_grayscale(const Image& x) {
  if (x.channels != 3) throw ValidationError("defense_grayscale: need a 3-channel image");
  Image out(3, x.height, x.width);
  const int plane = x.height * x.width;
  for (int p = 0; p < plane; ++p) {
    float y = 0.299f * x.data[p] + 0.587f * x.data[plane + p] + 0.114f * x.data[2 * plane + p];
    y = std::min(std::max(y, 0.0f), 1.0f);
    out.data[p] = y;
    out.data[plane + p] = y;
    out.data[2 * plane + p] = y;
  }
  return out;
}

/// Baseline JPEG round trip at the given quality.
inline Image defense_jpeg(const Image& x, int quality) {
  if (quality < 1 || quality > 100)
    throw ValidationError("defense_jpeg: quality must be in [1,100], got " +
                          std::to_string(quality));
  return jpeg_round_trip(x, quality);
}

/// Channel-wise shifts ~ U(-r_c, r_c) plus per-pixel zero-mean noise of
/// scale r_s (Gaussian by default, uniform U(-r_s, r_s) behind the flag),
/// clamped to [0,1].
inline Image adaptive_random(const Image& x, double r_c, double r_s, Rng& rng,
                             bool uniform_spatial = false) {
  if (r_c < 0.0 || r_s < 0.0) throw ValidationError("adaptive_random: radii must be >= 0");
  if (x.channels != 3) throw ValidationError("adaptive_random: need a 3-channel image");
  Image out = x;
  const int plane = x.height * x.width;
  float shift[3];
  for (int c = 0; c < 3; ++c) shift[c] = static_cast<float>(rng.uniform(-r_c, r_c));
  for (int c = 0; c < 3; ++c) {
    float* p = out.data.data() + std::size_t(c) * plane;
    for (int i = 0; i < plane; ++i) p[i] += shift[c];
  }
  if (r_s > 0.0) {
    for (float& v : out.data)
      v += static_cast<float>(uniform_spatial ? rng.uniform(-r_s, r_s) : rng.gaussian(0.0, r_s));
  }
  clamp_in_place(out, 0.0f, 1.0f);
  return out;
}

inline Image adaptive_random(const Image& x, double r_c, double r_s, std::uint64_t seed,
                             bool uniform_spatial = false) {
  Rng rng(seed);
  return adaptive_random(x, r_c, r_s, rng, uniform_spatial);
}

// ---------------------------------------------------------------------------
// Training-level defenses.

namespace detail {

/// Error-maximizing l-infinity PGD on the current model: start from uniform
/// noise in the ball, ascend the true-label CE with step epsilon/4, project
/// every step, clamp to [0,1] at the end. Rewrites the batch in place.
inline void adversarial_batch(const Classifier& model, std::vector<float>& x,
                              const std::vector<int>& y, double epsilon, int steps, Rng& rng) {
  const int batch = static_cast<int>(y.size());
  const std::size_t numel = model.input_shape().numel();
  const float eps = static_cast<float>(epsilon);
  const float step = eps / 4.0f;

  std::vector<float> x0 = x;
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = x0[i] + static_cast<float>(rng.uniform(-epsilon, epsilon));

  std::vector<float> grad(x.size());
  for (int t = 0; t < steps; ++t) {
    model.ce_input_gradients(x, y, grad.data());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float g = grad[i];
      float v = x[i] + step * (g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f));
      const float lo = x0[i] - eps, hi = x0[i] + eps;
      x[i] = std::min(std::max(v, lo), hi);
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::min(std::max(x[i], 0.0f), 1.0f);
  (void)batch;
  (void)numel;
}

}  // namespace detail

/// Adversarial training: every batch is replaced by error-maximizing PGD
/// examples before the optimizer step.
inline std::shared_ptr<Classifier> adversarial_training(const LabeledDataset& data,
                                                        const TrainSpec& spec, double epsilon_a,
                                                        int steps,
                                                        const std::string& arch = "compact") {
  if (!(epsilon_a > 0.0)) throw ValidationError("adversarial_training: epsilon must be > 0");
  if (steps < 1) throw ValidationError("adversarial_training: steps must be >= 1");
  if (data.size() == 0) throw ValidationError("adversarial_training: empty dataset");
  Shape3 in{data.images[0].channels, data.images[0].height, data.images[0].width};
  auto model = std::make_shared<Classifier>(arch, in, data.num_classes, spec.seed);

  // Dedicated noise stream: the weight-init and shuffle streams stay
  // identical to a vanilla run with the same seed.
  Rng noise_rng(derive_seed(spec.seed, seed_stream::kAdversarialNoise));
  train_in_place(*model, data, spec,
                 [&](const Classifier& m, std::vector<float>& x, const std::vector<int>& y,
                     const std::vector<int>&, int, int) {
                   detail::adversarial_batch(m, x, y, epsilon_a, steps, noise_rng);
                 });
  return model;
}

/// Adaptive defense: per batch, fresh channel shifts ~ U(-q_c, q_c) applied
/// to every sample, then inner-max adversarial noise with radius q_s, then
/// the optimizer step. With q_c = 0 this is exactly adversarial_training
/// with epsilon_a = q_s (the channel-shift stream is separate).
inline std::shared_ptr<Classifier> adaptive_channel_at(const LabeledDataset& data,
                                                       const TrainSpec& spec, double q_c,
                                                       double q_s, int steps,
                                                       const std::string& arch = "compact") {
  if (q_c < 0.0 || q_s < 0.0) throw ValidationError("adaptive_channel_at: radii must be >= 0");
  if (steps < 1) throw ValidationError("adaptive_channel_at: steps must be >= 1");
  if (data.size() == 0) throw ValidationError("adaptive_channel_at: empty dataset");
  Shape3 in{data.images[0].channels, data.images[0].height, data.images[0].width};
  if (in.c != 3) throw ValidationError("adaptive_channel_at: need 3-channel images");
  auto model = std::make_shared<Classifier>(arch, in, data.num_classes, spec.seed);

  Rng noise_rng(derive_seed(spec.seed, seed_stream::kAdversarialNoise));
  Rng channel_rng(derive_seed(spec.seed, seed_stream::kChannelShift));
  const int plane = in.h * in.w;
  train_in_place(*model, data, spec,
                 [&](const Classifier& m, std::vector<float>& x, const std::vector<int>& y,
                     const std::vector<int>&, int, int) {
                   const int batch = static_cast<int>(y.size());
                   for (int b = 0; b < batch; ++b) {
                     float shift[3];
                     for (int c = 0; c < 3; ++c)
                       shift[c] = static_cast<float>(channel_rng.uniform(-q_c, q_c));
                     float* img = x.data() + std::size_t(b) * in.numel();
                     for (int c = 0; c < 3; ++c)
                       for (int i = 0; i < plane; ++i) img[std::size_t(c) * plane + i] += shift[c];
                   }
                   if (q_s > 0.0) {
                     detail::adversarial_batch(m, x, y, q_s, steps, noise_rng);
                   } else {
                     for (auto& v : x) v = std::min(std::max(v, 0.0f), 1.0f);
                   }
                 });
  return model;
}

}  // namespace dualshift

#endif  // DUALSHIFT_DEFENSES_HPP

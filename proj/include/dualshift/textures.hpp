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

// Procedurally generated texture classification data for desk-scale runs.
//
// Class cid is a sinusoidal grating at orientation cid * (180/k) degrees.
// Everything else is per-sample jitter drawn from class-independent
// distributions: phase, wavelength, contrast, per-channel DC level,
// per-channel contrast gain, and Gaussian pixel noise. Channel statistics
// therefore carry no class information; orientation is the only label
// signal.

#ifndef DUALSHIFT_TEXTURES_HPP
#define DUALSHIFT_TEXTURES_HPP

#include <cmath>
#include <cstdint>
#include <string>

#include "dualshift/rng.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

struct TextureConfig {
  int num_classes = 10;
  int samples_per_class = 500;
  int height = 32;
  int width = 32;
  double wavelength_min = 9.0;
  double wavelength_max = 13.0;
  double contrast_min = 0.25;
  double contrast_max = 0.40;
  double dc_min = 0.40;
  double dc_max = 0.60;
  double channel_gain_min = 0.8;
  double channel_gain_max = 1.2;
  double pixel_noise_std = 0.05;
};

inline Image make_texture_sample(const TextureConfig& cfg, int class_id, Rng& rng) {
  const double theta = 3.14159265358979323846 * class_id / cfg.num_classes;
  const double wavelength = rng.uniform(cfg.wavelength_min, cfg.wavelength_max);
  const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
  double dc[3], gain[3];
  for (int c = 0; c < 3; ++c) dc[c] = rng.uniform(cfg.dc_min, cfg.dc_max);
  for (int c = 0; c < 3; ++c) gain[c] = rng.uniform(cfg.channel_gain_min, cfg.channel_gain_max);

  const double kx = std::cos(theta) * 2.0 * 3.14159265358979323846 / wavelength;
  const double ky = std::sin(theta) * 2.0 * 3.14159265358979323846 / wavelength;

  Image img(3, cfg.height, cfg.width);
  const int plane = cfg.height * cfg.width;
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double wave = std::sin(kx * x + ky * y + phase);  // in [-1,1]
      const double noise = rng.gaussian(0.0, cfg.pixel_noise_std);
      for (int c = 0; c < 3; ++c) {
        double v = dc[c] + contrast * gain[c] * 0.5 * wave + noise;
        img.data[std::size_t(c) * plane + y * cfg.width + x] =
            static_cast<float>(std::min(std::max(v, 0.0), 1.0));
      }
    }
  }
  return img;
}

/// Balanced dataset, class-major order (all of class 0 first, then class 1,
/// ...). Deterministic for a given seed.
inline LabeledDataset make_texture_dataset(const TextureConfig& cfg, std::uint64_t seed,
                                           const std::string& name = "textures") {
  LabeledDataset ds;
  ds.name = name;
  ds.num_classes = cfg.num_classes;
  for (int cls = 0; cls < cfg.num_classes; ++cls) {
    Rng rng(derive_seed(seed, seed_stream::kSynthesis, cls));
    for (int i = 0; i < cfg.samples_per_class; ++i) {
      ds.images.push_back(make_texture_sample(cfg, cls, rng));
      ds.labels.push_back(cls);
    }
  }
  return ds;
}

}  // namespace dualshift

#endif  // DUALSHIFT_TEXTURES_HPP

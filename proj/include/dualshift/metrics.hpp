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

// Image similarity measures backing the color-branch noise constraint:
// PSNR, SSIM (8x8 uniform window), and a pluggable perceptual distance.

#ifndef DUALSHIFT_METRICS_HPP
#define DUALSHIFT_METRICS_HPP

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

constexpr double kPsnrCap = 100.0;  // stands in for +inf at zero MSE

/// 10 log10(1 / MSE) for peak 1.0, capped at kPsnrCap.
inline double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("psnr: shape mismatch");
  if (a.size() == 0) throw ValidationError("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    se += d * d;
  }
  const double mse = se / double(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(10.0 * std::log10(1.0 / mse), kPsnrCap);
}

constexpr int kSsimWindow = 8;

/// Mean local SSIM over an 8x8 uniform sliding window per channel, standard
/// stabilizers C1=(0.01)^2, C2=(0.03)^2 for peak 1.0, averaged over channels
/// and window positions. Uses population moments (uniform window weights).
inline double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ValidationError("ssim: shape mismatch");
  const int H = a.height, W = a.width;
  if (H < kSsimWindow || W < kSsimWindow)
    throw ValidationError("ssim: image smaller than the " + std::to_string(kSsimWindow) + "x" +
                          std::to_string(kSsimWindow) + " window");
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  const int n = kSsimWindow * kSsimWindow;

  // Summed-area tables per channel for x, y, x^2, y^2, xy.
  const int SW = W + 1;
  const int SH = H + 1;
  std::vector<double> sx(std::size_t(SH) * SW), sy(sx.size()), sxx(sx.size()), syy(sx.size()),
      sxy(sx.size());

  double total = 0.0;
  long windows = 0;
  for (int c = 0; c < a.channels; ++c) {
    const float* pa = a.data.data() + std::size_t(c) * H * W;
    const float* pb = b.data.data() + std::size_t(c) * H * W;
    for (int x = 0; x < SW; ++x) sx[x] = sy[x] = sxx[x] = syy[x] = sxy[x] = 0.0;
    for (int yI = 1; yI < SH; ++yI) {
      const std::size_t row = std::size_t(yI) * SW;
      const std::size_t prev = row - SW;
      sx[row] = sy[row] = sxx[row] = syy[row] = sxy[row] = 0.0;
      for (int x = 1; x < SW; ++x) {
        const double va = pa[(yI - 1) * W + (x - 1)];
        const double vb = pb[(yI - 1) * W + (x - 1)];
        sx[row + x] = va + sx[row + x - 1] + sx[prev + x] - sx[prev + x - 1];
        sy[row + x] = vb + sy[row + x - 1] + sy[prev + x] - sy[prev + x - 1];
        sxx[row + x] = va * va + sxx[row + x - 1] + sxx[prev + x] - sxx[prev + x - 1];
        syy[row + x] = vb * vb + syy[row + x - 1] + syy[prev + x] - syy[prev + x - 1];
        sxy[row + x] = va * vb + sxy[row + x - 1] + sxy[prev + x] - sxy[prev + x - 1];
      }
    }
    auto window_sum = [&](const std::vector<double>& s, int y0, int x0) {
      const std::size_t r1 = std::size_t(y0) * SW, r2 = std::size_t(y0 + kSsimWindow) * SW;
      return s[r2 + x0 + kSsimWindow] - s[r2 + x0] - s[r1 + x0 + kSsimWindow] + s[r1 + x0];
    };
    for (int y0 = 0; y0 + kSsimWindow <= H; ++y0) {
      for (int x0 = 0; x0 + kSsimWindow <= W; ++x0) {
        const double mx = window_sum(sx, y0, x0) / n;
        const double my = window_sum(sy, y0, x0) / n;
        const double vx = window_sum(sxx, y0, x0) / n - mx * mx;
        const double vy = window_sum(syy, y0, x0) / n - my * my;
        const double cov = window_sum(sxy, y0, x0) / n - mx * my;
        const double val = ((2.0 * mx * my + C1) * (2.0 * cov + C2)) /
                           ((mx * mx + my * my + C1) * (vx + vy + C2));
        total += val;
        ++windows;
      }
    }
  }
  return total / double(windows);
}

// ---------------------------------------------------------------------------
// Perceptual distance with pluggable backends. The default backend measures a
// normalized L2 distance between intermediate feature maps of the first
// gallery member; an external implementation can be registered under any id.

using PerceptualFn = std::function<double(const Image&, const Image&)>;

class PerceptualRegistry {
 public:
  void register_backend(const std::string& id, PerceptualFn fn) { backends_[id] = std::move(fn); }

  bool has(const std::string& id) const { return backends_.count(id) != 0; }

  const PerceptualFn& backend(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end())
      throw ConfigError("perceptual_distance: unknown backend '" + id + "'");
    return it->second;
  }

  double distance(const std::string& id, const Image& a, const Image& b) const {
    if (!a.same_shape(b)) throw ValidationError("perceptual_distance: shape mismatch");
    return backend(id)(a, b);
  }

 private:
  std::map<std::string, PerceptualFn> backends_;
};

/// RMS difference of the first gallery member's first-block activations.
inline PerceptualFn make_gallery_feature_backend(const ModelGallery& gallery) {
  gallery.validate();
  auto member = gallery.members[0];
  return [member](const Image& a, const Image& b) -> double {
    if (!a.same_shape(b)) throw ValidationError("perceptual_distance: shape mismatch");
    std::vector<float> batch(a.size() * 2);
    std::copy(a.data.begin(), a.data.end(), batch.begin());
    std::copy(b.data.begin(), b.data.end(), batch.begin() + a.size());
    const std::vector<float> f = member->feature_map(batch, 2);
    const std::size_t n = f.size() / 2;
    double se = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = double(f[i]) - double(f[n + i]);
      se += d * d;
    }
    return std::sqrt(se / double(n));
  };
}

inline PerceptualRegistry default_perceptual_registry(const ModelGallery* gallery = nullptr) {
  PerceptualRegistry reg;
  if (gallery) reg.register_backend("gallery-feature", make_gallery_feature_backend(*gallery));
  return reg;
}

inline double perceptual_distance(const Image& a, const Image& b, const std::string& backend,
                                  const PerceptualRegistry& registry) {
  return registry.distance(backend, a, b);
}

}  // namespace dualshift

#endif  // DUALSHIFT_METRICS_HPP

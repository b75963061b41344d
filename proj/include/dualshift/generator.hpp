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

// Pipeline orchestration: per class, search the shared color offset, run
// per-sample spatial PGD on the clean images, combine both perturbations,
// clamp once, and emit the unlearnable dataset.

#ifndef DUALSHIFT_GENERATOR_HPP
#define DUALSHIFT_GENERATOR_HPP

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualshift/color.hpp"
#include "dualshift/common.hpp"
#include "dualshift/metrics.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/pso.hpp"
#include "dualshift/spatial.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

struct GeneratorConfig {
  int delta_y = 3;
  PGDConfig pgd;
  PSOConfig pso;
  NoiseConstraintConfig noise_constraint;
  int color_sample_count = 1000;  // N samples per class for the color objective
  bool enable_spatial = true;     // SB
  bool enable_color = true;       // CB
  bool enable_ensemble = true;    // UEE; off = first gallery member only
  bool sequential_branches = false;  // ablation: PGD on x + delta_c instead of clean x
  std::uint64_t master_seed = 1;
  std::string perceptual_backend = "gallery-feature";
  int pgd_chunk = 128;  // batching granularity; results are chunk-invariant

  void validate() const {
    if (!enable_spatial && !enable_color)
      throw ValidationError("GeneratorConfig: at least one branch must be enabled");
    pgd.validate();
    pso.validate();
    noise_constraint.validate();
    if (color_sample_count < 1)
      throw ValidationError("GeneratorConfig: color_sample_count must be >= 1");
    if (pgd_chunk < 1) throw ValidationError("GeneratorConfig: pgd_chunk must be >= 1");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["delta_y"] = delta_y;
    j["pgd"] = {{"epsilon", pgd.epsilon},
                {"beta", pgd.beta},
                {"steps", pgd.steps},
                {"beta_mode", pgd.beta_mode}};
    j["pso"] = {{"swarm_size", pso.swarm_size},     {"iterations", pso.iterations},
                {"inertia", pso.inertia},           {"cognitive", pso.cognitive},
                {"social", pso.social},             {"velocity_clamp", pso.velocity_clamp},
                {"bounds", pso.bounds}};
    j["noise_constraint"] = {{"tau_psnr", noise_constraint.tau_psnr},
                             {"tau_ssim", noise_constraint.tau_ssim},
                             {"tau_perceptual", noise_constraint.tau_perceptual},
                             {"lambda", noise_constraint.lambda}};
    j["color_sample_count"] = color_sample_count;
    j["enable_spatial"] = enable_spatial;
    j["enable_color"] = enable_color;
    j["enable_ensemble"] = enable_ensemble;
    j["sequential_branches"] = sequential_branches;
    j["master_seed"] = master_seed;
    j["perceptual_backend"] = perceptual_backend;
    return j;
  }
};

struct GenerationRecord {
  std::vector<ColorOffset> class_offsets;        // one per class
  std::vector<double> class_objective_values;    // PSO best value per class
  std::vector<double> spatial_linf;              // per-sample pre-clamp max |delta_s|
  double color_seconds = 0.0;
  double spatial_seconds = 0.0;
  nlohmann::json config_snapshot;

  nlohmann::json to_json() const {
    nlohmann::json j;
    std::vector<std::array<double, 3>> offs;
    for (const auto& o : class_offsets) offs.push_back({o.dr, o.dg, o.db});
    j["class_color_offsets"] = offs;
    j["class_objective_values"] = class_objective_values;
    j["spatial_linf"] = spatial_linf;
    j["color_seconds"] = color_seconds;
    j["spatial_seconds"] = spatial_seconds;
    j["config"] = config_snapshot;
    return j;
  }
};

/// clamp(x + delta_s + broadcast(delta_c), 0, 1).
inline Image combine_perturbations(const Image& x, const SpatialPerturbation& ds,
                                   const ColorOffset& dc) {
  if (!x.same_shape(ds.delta)) throw ValidationError("combine_perturbations: shape mismatch");
  if (x.channels != 3) throw ValidationError("combine_perturbations: need a 3-channel image");
  Image out = x;
  const int plane = x.height * x.width;
  const float d[3] = {static_cast<float>(dc.dr), static_cast<float>(dc.dg),
                      static_cast<float>(dc.db)};
  for (int c = 0; c < 3; ++c) {
    float* p = out.data.data() + std::size_t(c) * plane;
    const float* s = ds.delta.data.data() + std::size_t(c) * plane;
    for (int i = 0; i < plane; ++i) p[i] = std::min(std::max(p[i] + s[i] + d[c], 0.0f), 1.0f);
  }
  return out;
}

/// Runs the full scheme over a clean dataset. Labels are preserved; every
/// output pixel lies in [0,1]; every sample of a class carries the same
/// color offset; spatial perturbations respect the epsilon box (pre-clamp
/// norms are recorded). Deterministic for a fixed master seed.
inline std::pair<LabeledDataset, GenerationRecord> generate_unlearnable_dataset(
    const LabeledDataset& clean, const ModelGallery& gallery, const GeneratorConfig& cfg) {
  cfg.validate();
  gallery.validate();
  clean.validate();
  if (clean.size() == 0) throw ValidationError("generate: empty dataset");
  if (clean.num_classes != gallery.num_classes())
    throw ValidationError("generate: dataset k=" + std::to_string(clean.num_classes) +
                          " but gallery k=" + std::to_string(gallery.num_classes()));
  Shape3 in{clean.images[0].channels, clean.images[0].height, clean.images[0].width};
  if (!(in == gallery.input_shape()))
    throw ValidationError("generate: dataset image shape does not match gallery input");

  const ModelGallery effective =
      cfg.enable_ensemble ? gallery : gallery.first_member_view();
  const ShiftRule rule{cfg.delta_y, clean.num_classes};
  const ClassPartition partition = partition_by_class(clean);

  PerceptualRegistry registry = default_perceptual_registry(&effective);
  const PerceptualFn* perceptual = nullptr;
  if (cfg.enable_color) perceptual = &registry.backend(cfg.perceptual_backend);

  GenerationRecord record;
  record.config_snapshot = cfg.to_json();
  record.class_offsets.assign(clean.num_classes, ColorOffset{});
  record.class_objective_values.assign(clean.num_classes, 0.0);
  record.spatial_linf.assign(clean.size(), 0.0);

  LabeledDataset out;
  out.name = clean.name + "_ue";
  out.num_classes = clean.num_classes;
  out.images.resize(clean.size());
  out.labels = clean.labels;

  using clock = std::chrono::steady_clock;
  for (int cls = 0; cls < clean.num_classes; ++cls) {
    const std::vector<int>& members = partition.indices[cls];
    if (members.empty()) continue;
    std::vector<Image> class_images;
    class_images.reserve(members.size());
    for (int idx : members) class_images.push_back(clean.images[idx]);

    // Color branch first (Algorithm order); the offset is shared class-wide.
    ColorOffset offset;
    if (cfg.enable_color) {
      const auto t0 = clock::now();
      PSOConfig pso_cfg = cfg.pso;
      pso_cfg.seed = derive_seed(cfg.master_seed, seed_stream::kPsoInit, cls);
      try {
        ClassColorResult res = optimize_class_color(
            class_images, cls, rule, effective, cfg.color_sample_count, pso_cfg,
            cfg.noise_constraint, *perceptual,
            derive_seed(cfg.master_seed, seed_stream::kColorSubsample, cls));
        offset = res.offset;
        record.class_objective_values[cls] = res.objective_value;
      } catch (const OptimizationError& e) {
        throw OptimizationError("class " + std::to_string(cls) + ": " + e.what(), e.iteration);
      }
      record.color_seconds +=
          std::chrono::duration<double>(clock::now() - t0).count();
    }
    record.class_offsets[cls] = offset;

    // Spatial branch on the clean images (or on x + delta_c for the
    // sequential ablation), in chunks; results are chunk-size invariant.
    std::vector<SpatialPerturbation> deltas(members.size());
    if (cfg.enable_spatial) {
      const auto t0 = clock::now();
      std::vector<Image> base;
      if (cfg.sequential_branches) {
        base.reserve(class_images.size());
        for (const auto& img : class_images)
          base.push_back(apply_color_offset(img, offset, /*clamp=*/false));
      }
      const std::vector<Image>& source = cfg.sequential_branches ? base : class_images;
      for (std::size_t start = 0; start < source.size(); start += cfg.pgd_chunk) {
        const std::size_t stop = std::min(source.size(), start + cfg.pgd_chunk);
        std::vector<Image> chunk(source.begin() + start, source.begin() + stop);
        std::vector<int> labels(stop - start, cls);
        try {
          std::vector<SpatialPerturbation> d =
              pgd_toward_shift_label_batch(chunk, labels, effective, rule, cfg.pgd);
          for (std::size_t i = 0; i < d.size(); ++i) deltas[start + i] = std::move(d[i]);
        } catch (const OptimizationError& e) {
          throw OptimizationError("class " + std::to_string(cls) + " samples [" +
                                      std::to_string(start) + "," + std::to_string(stop) + "): " +
                                      e.what(),
                                  e.iteration);
        }
      }
      record.spatial_seconds +=
          std::chrono::duration<double>(clock::now() - t0).count();
    } else {
      for (std::size_t i = 0; i < members.size(); ++i)
        deltas[i].delta = Image(in.c, in.h, in.w);
    }

    for (std::size_t i = 0; i < members.size(); ++i) {
      const int idx = members[i];
      record.spatial_linf[idx] = deltas[i].linf();
      out.images[idx] = combine_perturbations(clean.images[idx], deltas[i], offset);
    }
  }

  return {std::move(out), std::move(record)};
}

}  // namespace dualshift

#endif  // DUALSHIFT_GENERATOR_HPP

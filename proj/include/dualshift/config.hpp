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

// Run configuration: a single versioned JSON document. Unknown keys are
// rejected with the offending key name. Absent fields fall back to the
// active scale preset ("desk" or "paper"). Environment overrides exist for
// paths and seeds only: DUALSHIFT_SEED and DUALSHIFT_PATH_<KEY>.

#ifndef DUALSHIFT_CONFIG_HPP
#define DUALSHIFT_CONFIG_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualshift/common.hpp"
#include "dualshift/defenses.hpp"
#include "dualshift/generator.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/textures.hpp"

namespace dualshift {

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for key '") + key + "'");
  }
}

}  // namespace detail

struct RunPaths {
  std::string clean_train = "data/clean_train";
  std::string clean_test = "data/clean_test";
  std::string gallery_dir = "out/gallery";
  std::string output_dir = "out";
};

struct VariantRef {
  std::string name;
  std::string path;
};

struct RunConfig {
  std::string scale = "desk";  // "desk" or "paper"
  std::uint64_t seed = 1;
  RunPaths paths;
  TextureConfig synth;
  int synth_test_per_class = 100;

  std::string gallery_arch = "compact";
  int gallery_members = 3;
  std::string gallery_diversity = "seeds";
  TrainSpec gallery_train;

  GeneratorConfig generator;

  std::string victim_arch = "compact";
  TrainSpec victim_train;
  std::vector<std::uint64_t> eval_seeds = {1, 2, 3};
  std::vector<DefenseConfig> defenses;
  std::vector<VariantRef> variants;
};

// ---------------------------------------------------------------------------

inline DefenseConfig parse_defense_json(const nlohmann::json& j, const std::string& where) {
  if (!j.contains("kind")) throw ConfigError(where + ": defense entry needs a 'kind'");
  DefenseConfig d;
  d.kind = defense_kind_from_name(j.at("kind").get<std::string>());
  switch (d.kind) {
    case DefenseKind::kNone:
    case DefenseKind::kGrayscale:
      detail::check_keys(j, where, {"kind"});
      break;
    case DefenseKind::kJpeg:
      detail::check_keys(j, where, {"kind", "quality"});
      d.jpeg_quality = detail::get_or(j, "quality", d.jpeg_quality);
      break;
    case DefenseKind::kAt:
      detail::check_keys(j, where, {"kind", "epsilon", "steps"});
      d.at_epsilon = detail::get_or(j, "epsilon", d.at_epsilon);
      d.at_steps = detail::get_or(j, "steps", d.at_steps);
      break;
    case DefenseKind::kAdaptiveRandom:
      detail::check_keys(j, where, {"kind", "r_c", "r_s", "refresh_per_epoch", "uniform_spatial_noise"});
      d.r_c = detail::get_or(j, "r_c", d.r_c);
      d.r_s = detail::get_or(j, "r_s", d.r_s);
      d.refresh_per_epoch = detail::get_or(j, "refresh_per_epoch", d.refresh_per_epoch);
      d.uniform_spatial_noise = detail::get_or(j, "uniform_spatial_noise", d.uniform_spatial_noise);
      break;
    case DefenseKind::kAdaptiveChannelAt:
      detail::check_keys(j, where, {"kind", "q_c", "q_s", "steps"});
      d.q_c = detail::get_or(j, "q_c", d.q_c);
      d.q_s = detail::get_or(j, "q_s", d.q_s);
      d.at_steps = detail::get_or(j, "steps", d.at_steps);
      break;
  }
  try {
    d.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return d;
}

/// --defense kind[:k=v,...] command-line form.
inline DefenseConfig parse_defense_spec(const std::string& spec) {
  nlohmann::json j;
  const auto colon = spec.find(':');
  j["kind"] = spec.substr(0, colon);
  if (colon != std::string::npos) {
    std::string rest = spec.substr(colon + 1);
    std::size_t pos = 0;
    while (pos < rest.size()) {
      auto comma = rest.find(',', pos);
      if (comma == std::string::npos) comma = rest.size();
      const std::string item = rest.substr(pos, comma - pos);
      const auto eq = item.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--defense: expected key=value in '" + item + "'");
      const std::string key = item.substr(0, eq);
      const std::string val = item.substr(eq + 1);
      if (key == "quality" || key == "steps")
        j[key] = std::stoi(val);
      else if (key == "refresh_per_epoch" || key == "uniform_spatial_noise")
        j[key] = (val == "true" || val == "1");
      else
        j[key] = std::stod(val);
      pos = comma + 1;
    }
  }
  return parse_defense_json(j, "--defense " + spec);
}

namespace detail {

inline TrainSpec parse_train_spec(const nlohmann::json& j, const std::string& where,
                                  const TrainSpec& defaults) {
  check_keys(j, where,
             {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay", "schedule"});
  TrainSpec t = defaults;
  t.epochs = get_or(j, "epochs", t.epochs);
  t.batch_size = get_or(j, "batch_size", t.batch_size);
  t.learning_rate = get_or(j, "learning_rate", t.learning_rate);
  t.momentum = get_or(j, "momentum", t.momentum);
  t.weight_decay = get_or(j, "weight_decay", t.weight_decay);
  t.schedule = get_or(j, "schedule", t.schedule);
  try {
    t.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return t;
}

}  // namespace detail

/// Scale presets. Desk sizes every knob for a workstation run; paper keeps
/// the published protocol (80-epoch training, N=1000, swarm 50, M=5).
inline RunConfig scale_defaults(const std::string& scale) {
  RunConfig c;
  c.scale = scale;
  if (scale == "desk") {
    c.gallery_arch = "compact";
    c.gallery_members = 3;
    c.gallery_train.epochs = 12;
    c.gallery_train.learning_rate = 0.01;
    c.victim_arch = "compact";
    c.victim_train.epochs = 20;
    c.victim_train.learning_rate = 0.01;
    c.generator.color_sample_count = 96;
    c.generator.pso.swarm_size = 12;
    c.generator.pso.iterations = 12;
  } else if (scale == "paper") {
    c.gallery_arch = "resnet_small";
    c.gallery_members = 5;
    c.gallery_train.epochs = 80;
    c.gallery_train.learning_rate = 0.1;
    c.victim_arch = "resnet_small";
    c.victim_train.epochs = 80;
    c.victim_train.learning_rate = 0.1;
    c.generator.color_sample_count = 1000;
    c.generator.pso.swarm_size = 50;
    c.generator.pso.iterations = 50;
  } else {
    throw ConfigError("unknown scale '" + scale + "' (expected 'desk' or 'paper')");
  }
  c.victim_train.batch_size = 128;
  c.gallery_train.batch_size = 128;
  return c;
}

inline RunConfig parse_run_config(const nlohmann::json& j,
                                  const std::string& scale_override = "") {
  detail::check_keys(j, "config",
                     {"format_version", "scale", "seed", "paths", "synth", "gallery", "generator",
                      "eval"});
  if (detail::get_or(j, "format_version", 0) != 1)
    throw ConfigError("config: format_version must be 1");

  std::string scale = detail::get_or<std::string>(j, "scale", "desk");
  if (!scale_override.empty()) scale = scale_override;
  RunConfig c = scale_defaults(scale);
  c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
  c.generator.master_seed = c.seed;

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    detail::check_keys(p, "paths", {"clean_train", "clean_test", "gallery_dir", "output_dir"});
    c.paths.clean_train = detail::get_or(p, "clean_train", c.paths.clean_train);
    c.paths.clean_test = detail::get_or(p, "clean_test", c.paths.clean_test);
    c.paths.gallery_dir = detail::get_or(p, "gallery_dir", c.paths.gallery_dir);
    c.paths.output_dir = detail::get_or(p, "output_dir", c.paths.output_dir);
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    detail::check_keys(s, "synth",
                       {"num_classes", "train_per_class", "test_per_class", "height", "width",
                        "pixel_noise_std"});
    c.synth.num_classes = detail::get_or(s, "num_classes", c.synth.num_classes);
    c.synth.samples_per_class = detail::get_or(s, "train_per_class", c.synth.samples_per_class);
    c.synth_test_per_class = detail::get_or(s, "test_per_class", c.synth_test_per_class);
    c.synth.height = detail::get_or(s, "height", c.synth.height);
    c.synth.width = detail::get_or(s, "width", c.synth.width);
    c.synth.pixel_noise_std = detail::get_or(s, "pixel_noise_std", c.synth.pixel_noise_std);
  }

  if (j.contains("gallery")) {
    const auto& g = j.at("gallery");
    detail::check_keys(g, "gallery", {"arch", "members", "diversity", "train"});
    c.gallery_arch = detail::get_or(g, "arch", c.gallery_arch);
    c.gallery_members = detail::get_or(g, "members", c.gallery_members);
    c.gallery_diversity = detail::get_or(g, "diversity", c.gallery_diversity);
    if (g.contains("train")) c.gallery_train = detail::parse_train_spec(g.at("train"), "gallery.train", c.gallery_train);
  }

  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    detail::check_keys(g, "generator",
                       {"delta_y", "pgd", "pso", "noise_constraint", "color_sample_count",
                        "enable_spatial", "enable_color", "enable_ensemble",
                        "sequential_branches", "perceptual_backend"});
    c.generator.delta_y = detail::get_or(g, "delta_y", c.generator.delta_y);
    if (g.contains("pgd")) {
      const auto& p = g.at("pgd");
      detail::check_keys(p, "generator.pgd", {"epsilon", "beta", "steps", "beta_mode"});
      c.generator.pgd.epsilon = detail::get_or(p, "epsilon", c.generator.pgd.epsilon);
      c.generator.pgd.beta = detail::get_or(p, "beta", c.generator.pgd.beta);
      c.generator.pgd.steps = detail::get_or(p, "steps", c.generator.pgd.steps);
      c.generator.pgd.beta_mode = detail::get_or(p, "beta_mode", c.generator.pgd.beta_mode);
    }
    if (g.contains("pso")) {
      const auto& p = g.at("pso");
      detail::check_keys(p, "generator.pso",
                         {"swarm_size", "iterations", "inertia", "cognitive", "social",
                          "velocity_clamp", "bounds"});
      c.generator.pso.swarm_size = detail::get_or(p, "swarm_size", c.generator.pso.swarm_size);
      c.generator.pso.iterations = detail::get_or(p, "iterations", c.generator.pso.iterations);
      c.generator.pso.inertia = detail::get_or(p, "inertia", c.generator.pso.inertia);
      c.generator.pso.cognitive = detail::get_or(p, "cognitive", c.generator.pso.cognitive);
      c.generator.pso.social = detail::get_or(p, "social", c.generator.pso.social);
      c.generator.pso.velocity_clamp =
          detail::get_or(p, "velocity_clamp", c.generator.pso.velocity_clamp);
      c.generator.pso.bounds = detail::get_or(p, "bounds", c.generator.pso.bounds);
    }
    if (g.contains("noise_constraint")) {
      const auto& p = g.at("noise_constraint");
      detail::check_keys(p, "generator.noise_constraint",
                         {"tau_psnr", "tau_ssim", "tau_perceptual", "lambda"});
      c.generator.noise_constraint.tau_psnr =
          detail::get_or(p, "tau_psnr", c.generator.noise_constraint.tau_psnr);
      c.generator.noise_constraint.tau_ssim =
          detail::get_or(p, "tau_ssim", c.generator.noise_constraint.tau_ssim);
      c.generator.noise_constraint.tau_perceptual =
          detail::get_or(p, "tau_perceptual", c.generator.noise_constraint.tau_perceptual);
      c.generator.noise_constraint.lambda =
          detail::get_or(p, "lambda", c.generator.noise_constraint.lambda);
    }
    c.generator.color_sample_count =
        detail::get_or(g, "color_sample_count", c.generator.color_sample_count);
    c.generator.enable_spatial = detail::get_or(g, "enable_spatial", c.generator.enable_spatial);
    c.generator.enable_color = detail::get_or(g, "enable_color", c.generator.enable_color);
    c.generator.enable_ensemble =
        detail::get_or(g, "enable_ensemble", c.generator.enable_ensemble);
    c.generator.sequential_branches =
        detail::get_or(g, "sequential_branches", c.generator.sequential_branches);
    c.generator.perceptual_backend =
        detail::get_or(g, "perceptual_backend", c.generator.perceptual_backend);
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::check_keys(e, "eval", {"victim_arch", "train", "seeds", "defenses", "variants"});
    c.victim_arch = detail::get_or(e, "victim_arch", c.victim_arch);
    if (e.contains("train"))
      c.victim_train = detail::parse_train_spec(e.at("train"), "eval.train", c.victim_train);
    if (e.contains("seeds")) c.eval_seeds = e.at("seeds").get<std::vector<std::uint64_t>>();
    if (e.contains("defenses")) {
      c.defenses.clear();
      int i = 0;
      for (const auto& d : e.at("defenses"))
        c.defenses.push_back(parse_defense_json(d, "eval.defenses[" + std::to_string(i++) + "]"));
    }
    if (e.contains("variants")) {
      c.variants.clear();
      for (const auto& v : e.at("variants")) {
        detail::check_keys(v, "eval.variants[]", {"name", "path"});
        c.variants.push_back({v.at("name").get<std::string>(), v.at("path").get<std::string>()});
      }
    }
  }

  // Environment overrides: paths and seeds only.
  if (const char* s = std::getenv("DUALSHIFT_SEED")) {
    c.seed = std::stoull(s);
    c.generator.master_seed = c.seed;
  }
  auto env_path = [&](const char* var, std::string& field) {
    if (const char* v = std::getenv(var)) field = v;
  };
  env_path("DUALSHIFT_PATH_CLEAN_TRAIN", c.paths.clean_train);
  env_path("DUALSHIFT_PATH_CLEAN_TEST", c.paths.clean_test);
  env_path("DUALSHIFT_PATH_GALLERY_DIR", c.paths.gallery_dir);
  env_path("DUALSHIFT_PATH_OUTPUT_DIR", c.paths.output_dir);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 const std::string& scale_override = "") {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, scale_override);
}

}  // namespace dualshift

#endif  // DUALSHIFT_CONFIG_HPP

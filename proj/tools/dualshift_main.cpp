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

// Command-line pipeline driver.
//
//   dualshift synth         --config cfg.json        write clean train/test sets
//   dualshift train-gallery --config cfg.json        train surrogate checkpoints
//   dualshift generate      --config cfg.json        emit the unlearnable dataset
//   dualshift evaluate      --config cfg.json        run the defense matrix
//
// Exit codes: 0 success, 1 runtime failure, 2 config/validation failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dualshift/config.hpp"
#include "dualshift/data_io.hpp"
#include "dualshift/defenses.hpp"
#include "dualshift/eval.hpp"
#include "dualshift/generator.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/svg_chart.hpp"
#include "dualshift/textures.hpp"

namespace fs = std::filesystem;
using namespace dualshift;

namespace {

struct CommonArgs {
  std::string config_path;
  int jobs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool desk_scale = false;
  bool paper_scale = false;
};

RunConfig load_config(const CommonArgs& args) {
  std::string scale;
  if (args.desk_scale && args.paper_scale)
    throw ConfigError("--desk-scale and --paper-scale are mutually exclusive");
  if (args.desk_scale) scale = "desk";
  if (args.paper_scale) scale = "paper";
  RunConfig cfg = load_run_config(args.config_path, scale);
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.generator.master_seed = args.seed;
  }
  set_worker_threads(args.jobs);
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
  cmd->add_option("--jobs", args.jobs, "worker thread cap (0 = hardware, 1 = fully serial)");
  cmd->add_option("--seed", args.seed, "override the master seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_flag("--desk-scale", args.desk_scale, "force the desk-scale preset");
  cmd->add_flag("--paper-scale", args.paper_scale, "force the paper-scale preset");
}

DatasetManifest clean_manifest(const LabeledDataset& ds) {
  DatasetManifest m;
  m.name = ds.name;
  m.num_classes = ds.num_classes;
  m.sample_count = static_cast<int>(ds.size());
  m.channels = ds.images[0].channels;
  m.height = ds.images[0].height;
  m.width = ds.images[0].width;
  return m;
}

int cmd_synth(const CommonArgs& args) {
  RunConfig cfg = load_config(args);
  TextureConfig train_cfg = cfg.synth;
  TextureConfig test_cfg = cfg.synth;
  test_cfg.samples_per_class = cfg.synth_test_per_class;

  LabeledDataset train =
      make_texture_dataset(train_cfg, derive_seed(cfg.seed, seed_stream::kSynthesis, 0), "textures_train");
  LabeledDataset test =
      make_texture_dataset(test_cfg, derive_seed(cfg.seed, seed_stream::kSynthesis, 1), "textures_test");
  export_unlearnable_dataset(train, clean_manifest(train), cfg.paths.clean_train);
  export_unlearnable_dataset(test, clean_manifest(test), cfg.paths.clean_test);
  std::cout << "wrote " << train.size() << " train samples to " << cfg.paths.clean_train << "\n"
            << "wrote " << test.size() << " test samples to " << cfg.paths.clean_test << "\n";
  return 0;
}

int cmd_train_gallery(const CommonArgs& args) {
  RunConfig cfg = load_config(args);
  LabeledDataset train = load_dataset(cfg.paths.clean_train);
  TrainSpec spec = cfg.gallery_train;
  spec.seed = cfg.seed;
  ModelGallery gallery =
      build_gallery(train, spec, cfg.gallery_members, cfg.gallery_diversity, cfg.gallery_arch);

  fs::create_directories(cfg.paths.gallery_dir);
  nlohmann::json prov;
  prov["members"] = nlohmann::json::array();
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "member_%02zu.ckpt", j);
    save_checkpoint(*gallery.members[j], fs::path(cfg.paths.gallery_dir) / name,
                    gallery.provenance[j]);
    prov["members"].push_back({{"file", name}, {"provenance", gallery.provenance[j]}});
  }
  prov["arch"] = cfg.gallery_arch;
  prov["diversity"] = cfg.gallery_diversity;
  prov["seed"] = cfg.seed;
  prov["epochs"] = spec.epochs;
  std::ofstream out(fs::path(cfg.paths.gallery_dir) / "provenance.json");
  out << prov.dump(2) << "\n";
  std::cout << "wrote " << gallery.size() << " checkpoints to " << cfg.paths.gallery_dir << "\n";
  return 0;
}

ModelGallery load_gallery(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "provenance.json"))
    throw IoError("gallery not found at " + dir + " (run train-gallery first)");
  std::ifstream in(fs::path(dir) / "provenance.json");
  nlohmann::json prov;
  in >> prov;
  ModelGallery g;
  for (const auto& m : prov.at("members")) {
    std::string p;
    g.members.push_back(load_checkpoint(fs::path(dir) / m.at("file").get<std::string>(), &p));
    g.provenance.push_back(p);
  }
  g.validate();
  return g;
}

int cmd_generate(const CommonArgs& args, bool no_sb, bool no_cb, bool no_uee) {
  RunConfig cfg = load_config(args);
  if (no_sb) cfg.generator.enable_spatial = false;
  if (no_cb) cfg.generator.enable_color = false;
  if (no_uee) cfg.generator.enable_ensemble = false;
  cfg.generator.validate();  // rejects --no-sb --no-cb before heavy work

  LabeledDataset clean = load_dataset(cfg.paths.clean_train);
  ModelGallery gallery = load_gallery(cfg.paths.gallery_dir);

  auto [ue, record] = generate_unlearnable_dataset(clean, gallery, cfg.generator);

  std::string variant = "ue";
  variant += cfg.generator.enable_spatial ? "_sb" : "";
  variant += cfg.generator.enable_color ? "_cb" : "";
  variant += cfg.generator.enable_ensemble ? "_uee" : "";
  const fs::path dest = fs::path(cfg.paths.output_dir) / variant;

  DatasetManifest m = clean_manifest(ue);
  m.name = ue.name;
  m.epsilon = cfg.generator.enable_spatial ? cfg.generator.pgd.epsilon : 0.0;
  m.delta_y = cfg.generator.delta_y;
  for (const auto& o : record.class_offsets)
    m.class_color_offsets.push_back({o.dr, o.dg, o.db});
  m.generator_config = cfg.generator.to_json();
  export_unlearnable_dataset(ue, m, dest);

  std::ofstream rec(dest / "generation_record.json");
  rec << record.to_json().dump(2) << "\n";
  std::cout << "wrote unlearnable dataset to " << dest.string() << " (color "
            << record.color_seconds << "s, spatial " << record.spatial_seconds << "s)\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::vector<std::string>& defense_specs) {
  RunConfig cfg = load_config(args);
  if (!defense_specs.empty()) {
    cfg.defenses.clear();
    for (const auto& s : defense_specs) cfg.defenses.push_back(parse_defense_spec(s));
  }
  if (cfg.defenses.empty()) cfg.defenses.push_back(DefenseConfig{});
  if (cfg.variants.empty())
    throw ConfigError("eval.variants is empty; nothing to evaluate");

  LabeledDataset test = load_dataset(cfg.paths.clean_test);
  std::vector<LabeledDataset> storage;
  storage.reserve(cfg.variants.size());
  std::vector<DatasetVariant> variants;
  for (const auto& v : cfg.variants) {
    storage.push_back(load_dataset(v.path));
    variants.push_back({v.name, &storage.back()});
  }

  fs::create_directories(cfg.paths.output_dir);
  const fs::path store = fs::path(cfg.paths.output_dir) / "report.csv";
  TrainSpec spec = cfg.victim_train;
  EvalReport report = run_matrix(
      variants, test, cfg.defenses, spec, cfg.eval_seeds, cfg.victim_arch, store,
      [](const EvalCell& cell, bool skipped) {
        if (skipped)
          std::cout << "skipped " << cell.variant << " / " << cell.defense << " / seed "
                    << cell.seed << " (already computed)\n";
        else if (cell.failed)
          std::cout << "FAILED " << cell.variant << " / " << cell.defense << " / seed "
                    << cell.seed << ": " << cell.error << "\n";
        else
          std::cout << cell.variant << " / " << cell.defense << " / seed " << cell.seed << " -> "
                    << cell.accuracy << "% (" << cell.runtime_seconds << "s)\n";
      });

  write_report_csv(report, fs::path(cfg.paths.output_dir) / "report.csv");
  std::ofstream agg(fs::path(cfg.paths.output_dir) / "aggregate.json");
  agg << report_aggregate_json(report).dump(2) << "\n";
  write_accuracy_chart_svg(report, fs::path(cfg.paths.output_dir) / "chart.svg");

  int ok = 0;
  for (const auto& c : report.cells)
    if (!c.failed) ++ok;
  std::cout << ok << "/" << report.cells.size() << " cells computed\n";
  return ok > 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-branch unlearnable dataset toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, gallery_args, gen_args, eval_args;
  bool no_sb = false, no_cb = false, no_uee = false;
  std::vector<std::string> defense_specs;

  CLI::App* synth = app.add_subcommand("synth", "write procedural clean train/test datasets");
  add_common(synth, synth_args);
  CLI::App* gallery = app.add_subcommand("train-gallery", "train the surrogate checkpoint gallery");
  add_common(gallery, gallery_args);
  CLI::App* generate = app.add_subcommand("generate", "generate the unlearnable dataset");
  add_common(generate, gen_args);
  generate->add_flag("--no-sb", no_sb, "disable the spatial branch");
  generate->add_flag("--no-cb", no_cb, "disable the color branch");
  generate->add_flag("--no-uee", no_uee, "disable the ensemble (first member only)");
  CLI::App* evaluate = app.add_subcommand("evaluate", "train victims and emit the accuracy matrix");
  add_common(evaluate, eval_args);
  evaluate->add_option("--defense", defense_specs,
                       "defense spec kind[:k=v,...], repeatable; overrides the config list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (gallery->parsed()) return cmd_train_gallery(gallery_args);
    if (generate->parsed()) return cmd_generate(gen_args, no_sb, no_cb, no_uee);
    if (evaluate->parsed()) return cmd_evaluate(eval_args, defense_specs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

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

// Victim training under defenses and the (dataset variant x defense x seed)
// accuracy matrix with resumable cells.

#ifndef DUALSHIFT_EVAL_HPP
#define DUALSHIFT_EVAL_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "dualshift/common.hpp"
#include "dualshift/defenses.hpp"
#include "dualshift/model_zoo.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

/// Argmax accuracy in percent. Ties resolve to the lowest class index.
inline double test_accuracy(const Classifier& model, const LabeledDataset& test_set) {
  if (test_set.size() == 0) throw ValidationError("test_accuracy: empty test set");
  test_set.validate();
  const std::size_t numel = model.input_shape().numel();
  const int k = model.num_classes();
  long correct = 0;
  const int chunk = 256;
  for (std::size_t start = 0; start < test_set.size(); start += chunk) {
    const int b = static_cast<int>(std::min<std::size_t>(chunk, test_set.size() - start));
    std::vector<float> x(std::size_t(b) * numel);
    for (int i = 0; i < b; ++i)
      std::memcpy(x.data() + std::size_t(i) * numel, test_set.images[start + i].data.data(),
                  numel * sizeof(float));
    const std::vector<float> z = model.logits(x, b);
    for (int i = 0; i < b; ++i) {
      const float* zi = z.data() + std::size_t(i) * k;
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (zi[c] > zi[best]) best = c;
      if (best == test_set.labels[start + i]) ++correct;
    }
  }
  return 100.0 * double(correct) / double(test_set.size());
}

/// Applies a dataset-level defense as a one-shot preprocessing pass.
inline LabeledDataset apply_dataset_defense(const LabeledDataset& ds, const DefenseConfig& cfg) {
  cfg.validate();
  if (!cfg.is_dataset_level())
    throw ValidationError("apply_dataset_defense: " + defense_kind_name(cfg.kind) +
                          " is a training-level defense");
  LabeledDataset out;
  out.name = ds.name + "+" + cfg.label();
  out.num_classes = ds.num_classes;
  out.labels = ds.labels;
  out.images.resize(ds.size());
  switch (cfg.kind) {
    case DefenseKind::kNone:
      out.images = ds.images;
      break;
    case DefenseKind::kGrayscale:
      for (std::size_t i = 0; i < ds.size(); ++i) out.images[i] = defense_grayscale(ds.images[i]);
      break;
    case DefenseKind::kJpeg:
      for (std::size_t i = 0; i < ds.size(); ++i)
        out.images[i] = defense_jpeg(ds.images[i], cfg.jpeg_quality);
      break;
    case DefenseKind::kAdaptiveRandom: {
      Rng rng(derive_seed(cfg.seed, seed_stream::kDefense));
      for (std::size_t i = 0; i < ds.size(); ++i)
        out.images[i] = adaptive_random(ds.images[i], cfg.r_c, cfg.r_s, rng,
                                        cfg.uniform_spatial_noise);
      break;
    }
    default:
      throw ValidationError("apply_dataset_defense: unhandled kind");
  }
  return out;
}

/// Trains a victim on the (defended) training set. Dataset-level defenses
/// transform the set once up front (adaptive_random optionally per epoch);
/// training-level defenses run inline. A defense is one kind per run by
/// construction; mixing levels is rejected at config parse time.
inline std::shared_ptr<Classifier> train_victim(const LabeledDataset& train_set,
                                                const DefenseConfig& defense,
                                                const TrainSpec& spec,
                                                const std::string& arch = "compact") {
  defense.validate();
  spec.validate();
  switch (defense.kind) {
    case DefenseKind::kAt:
      return adversarial_training(train_set, spec, defense.at_epsilon, defense.at_steps, arch);
    case DefenseKind::kAdaptiveChannelAt:
      return adaptive_channel_at(train_set, spec, defense.q_c, defense.q_s, defense.at_steps,
                                 arch);
    case DefenseKind::kAdaptiveRandom:
      if (defense.refresh_per_epoch) {
        // Fresh noise over the whole training set at every epoch boundary.
        if (train_set.size() == 0) throw ValidationError("train_victim: empty dataset");
        Shape3 in{train_set.images[0].channels, train_set.images[0].height,
                  train_set.images[0].width};
        auto model = std::make_shared<Classifier>(arch, in, train_set.num_classes, spec.seed);
        Rng rng(derive_seed(defense.seed, seed_stream::kDefense));
        const std::size_t numel = in.numel();
        int current_epoch = -1;
        std::vector<Image> noised;
        train_in_place(*model, train_set, spec,
                       [&](const Classifier&, std::vector<float>& x, const std::vector<int>&,
                           const std::vector<int>& idxs, int epoch, int) {
                         if (epoch != current_epoch) {
                           current_epoch = epoch;
                           noised.resize(train_set.size());
                           for (std::size_t i = 0; i < train_set.size(); ++i)
                             noised[i] = adaptive_random(train_set.images[i], defense.r_c,
                                                         defense.r_s, rng,
                                                         defense.uniform_spatial_noise);
                         }
                         for (std::size_t i = 0; i < idxs.size(); ++i)
                           std::memcpy(x.data() + i * numel, noised[idxs[i]].data.data(),
                                       numel * sizeof(float));
                       });
        return model;
      }
      [[fallthrough]];
    default: {
      const LabeledDataset defended = apply_dataset_defense(train_set, defense);
      return train_surrogate(defended, spec, arch);
    }
  }
}

// ---------------------------------------------------------------------------
// Evaluation matrix.

struct EvalCell {
  std::string variant;
  std::string defense;
  std::string arch;
  std::uint64_t seed = 0;
  double accuracy = 0.0;  // percent
  double runtime_seconds = 0.0;
  bool failed = false;
  std::string error;
};

struct EvalAggregate {
  std::string variant;
  std::string defense;
  double mean = 0.0;
  double stddev = 0.0;  // population std over seeds
  int cells = 0;
};

struct EvalReport {
  std::vector<EvalCell> cells;
  std::vector<EvalAggregate> aggregates;
  std::string codec_id;  // JPEG codec provenance

  void aggregate() {
    aggregates.clear();
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const auto& c : cells)
      if (!c.failed) groups[{c.variant, c.defense}].push_back(c.accuracy);
    for (const auto& [key, accs] : groups) {
      EvalAggregate a;
      a.variant = key.first;
      a.defense = key.second;
      a.cells = static_cast<int>(accs.size());
      double sum = 0.0;
      for (double v : accs) sum += v;
      a.mean = sum / accs.size();
      double sq = 0.0;
      for (double v : accs) sq += (v - a.mean) * (v - a.mean);
      a.stddev = std::sqrt(sq / accs.size());
      aggregates.push_back(a);
    }
  }
};

struct DatasetVariant {
  std::string name;
  const LabeledDataset* train = nullptr;
};

inline std::string eval_cell_key(const std::string& variant, const std::string& defense,
                                 const std::string& arch, std::uint64_t seed) {
  return variant + "|" + defense + "|" + arch + "|" + std::to_string(seed);
}

inline void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_report_csv: cannot open " + path.string());
  out << "variant,defense,arch,seed,accuracy,runtime_s\n";
  for (const auto& c : report.cells) {
    if (c.failed) continue;
    out << c.variant << "," << c.defense << "," << c.arch << "," << c.seed << "," << c.accuracy
        << "," << c.runtime_seconds << "\n";
  }
}

inline nlohmann::json report_aggregate_json(const EvalReport& report) {
  nlohmann::json j;
  j["codec"] = report.codec_id;
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : report.aggregates)
    j["aggregates"].push_back({{"variant", a.variant},
                               {"defense", a.defense},
                               {"mean", a.mean},
                               {"stddev", a.stddev},
                               {"cells", a.cells}});
  j["failures"] = nlohmann::json::array();
  for (const auto& c : report.cells)
    if (c.failed)
      j["failures"].push_back({{"variant", c.variant},
                               {"defense", c.defense},
                               {"seed", c.seed},
                               {"error", c.error}});
  return j;
}

/// One victim per (variant, defense, seed) cell, retrained from scratch;
/// completed cells are appended to store_path (CSV) and skipped on rerun.
/// Cell failures are recorded and the matrix continues.
inline EvalReport run_matrix(const std::vector<DatasetVariant>& variants,
                             const LabeledDataset& test_set,
                             const std::vector<DefenseConfig>& defenses, const TrainSpec& spec,
                             const std::vector<std::uint64_t>& seeds,
                             const std::string& arch = "compact",
                             const std::filesystem::path& store_path = {},
                             const std::function<void(const EvalCell&, bool)>& on_cell = nullptr) {
  if (variants.empty() || defenses.empty() || seeds.empty())
    throw ValidationError("run_matrix: variants, defenses and seeds must be nonempty");

  EvalReport report;
  report.codec_id = jpeg_codec_id();

  // Resume: previously completed cells, keyed by (variant, defense, arch, seed).
  std::map<std::string, EvalCell> done;
  if (!store_path.empty() && std::filesystem::exists(store_path)) {
    std::ifstream in(store_path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      EvalCell c;
      std::string seed_str, acc_str, rt_str;
      if (!std::getline(ss, c.variant, ',')) continue;
      if (!std::getline(ss, c.defense, ',')) continue;
      if (!std::getline(ss, c.arch, ',')) continue;
      if (!std::getline(ss, seed_str, ',')) continue;
      if (!std::getline(ss, acc_str, ',')) continue;
      if (!std::getline(ss, rt_str, ',')) continue;
      c.seed = std::stoull(seed_str);
      c.accuracy = std::stod(acc_str);
      c.runtime_seconds = std::stod(rt_str);
      done[eval_cell_key(c.variant, c.defense, c.arch, c.seed)] = c;
    }
  }

  std::ofstream store;
  if (!store_path.empty()) {
    const bool fresh = !std::filesystem::exists(store_path);
    store.open(store_path, std::ios::app);
    if (!store) throw IoError("run_matrix: cannot open store " + store_path.string());
    if (fresh) store << "variant,defense,arch,seed,accuracy,runtime_s\n" << std::flush;
  }

  for (const auto& variant : variants) {
    for (const auto& defense : defenses) {
      for (std::uint64_t seed : seeds) {
        const std::string key = eval_cell_key(variant.name, defense.label(), arch, seed);
        auto it = done.find(key);
        if (it != done.end()) {
          report.cells.push_back(it->second);
          if (on_cell) on_cell(it->second, /*skipped=*/true);
          continue;
        }
        EvalCell cell;
        cell.variant = variant.name;
        cell.defense = defense.label();
        cell.arch = arch;
        cell.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          TrainSpec cell_spec = spec;
          cell_spec.seed = seed;
          DefenseConfig cell_defense = defense;
          cell_defense.seed = derive_seed(seed, seed_stream::kDefense);
          auto victim = train_victim(*variant.train, cell_defense, cell_spec, arch);
          cell.accuracy = test_accuracy(*victim, test_set);
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
        }
        cell.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.cells.push_back(cell);
        if (!cell.failed && store.is_open()) {
          store << cell.variant << "," << cell.defense << "," << cell.arch << "," << cell.seed
                << "," << cell.accuracy << "," << cell.runtime_seconds << "\n"
                << std::flush;
        }
        if (on_cell) on_cell(cell, /*skipped=*/false);
      }
    }
  }
  report.aggregate();
  return report;
}

}  // namespace dualshift

#endif  // DUALSHIFT_EVAL_HPP

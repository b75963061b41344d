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

// Surrogate classifiers, SGD training, the checkpoint gallery, and the
// ensemble loss / input-gradient aggregation that drives both perturbation
// branches.

#ifndef DUALSHIFT_MODEL_ZOO_HPP
#define DUALSHIFT_MODEL_ZOO_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dualshift/common.hpp"
#include "dualshift/nn.hpp"
#include "dualshift/rng.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

struct TrainSpec {
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  std::string schedule = "constant";  // "constant" or "cosine"

  void validate() const {
    if (epochs < 1) throw ValidationError("TrainSpec: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("TrainSpec: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("TrainSpec: learning_rate must be > 0");
    if (schedule != "constant" && schedule != "cosine")
      throw ValidationError("TrainSpec: unknown schedule '" + schedule + "'");
  }
};

/// A classifier checkpoint: architecture, parameters, provenance.
class Classifier {
 public:
  Classifier(const std::string& arch, Shape3 input, int num_classes, std::uint64_t seed)
      : net_(arch, input, num_classes), seed_(seed) {
    net_.init_params(seed);
  }

  const ConvNet& net() const { return net_; }
  ConvNet& net() { return net_; }
  Shape3 input_shape() const { return net_.input_shape(); }
  int num_classes() const { return net_.num_classes(); }
  const std::string& arch() const { return net_.arch(); }
  std::uint64_t seed() const { return seed_; }
  int trained_epochs() const { return trained_epochs_; }
  void set_trained_epochs(int e) { trained_epochs_ = e; }

  void check_batch(std::size_t x_size, int batch) const {
    if (x_size != std::size_t(batch) * net_.input_shape().numel())
      throw ValidationError("Classifier: batch buffer size " + std::to_string(x_size) +
                            " does not match batch " + std::to_string(batch) + " x input shape");
  }

  std::vector<float> logits(const std::vector<float>& x, int batch) const {
    check_batch(x.size(), batch);
    return net_.logits(x.data(), batch);
  }

  /// Mean cross-entropy over the batch.
  double mean_ce(const std::vector<float>& x, const std::vector<int>& labels) const {
    const int batch = static_cast<int>(labels.size());
    check_batch(x.size(), batch);
    const std::vector<float> z = net_.logits(x.data(), batch);
    return softmax_cross_entropy(z.data(), labels.data(), batch, num_classes(), nullptr, nullptr,
                                 0.0f);
  }

  /// Gradient of each sample's own cross-entropy w.r.t. that sample's
  /// pixels (batch-size invariant). Optionally reports per-sample losses.
  void ce_input_gradients(const std::vector<float>& x, const std::vector<int>& labels, float* dx,
                          double* per_sample_loss = nullptr) const {
    const int batch = static_cast<int>(labels.size());
    check_batch(x.size(), batch);
    BatchCache cache;
    net_.forward(x.data(), batch, cache);
    std::vector<float> dlogits(std::size_t(batch) * num_classes());
    softmax_cross_entropy(cache.acts.back().data(), labels.data(), batch, num_classes(),
                          per_sample_loss, dlogits.data(), 1.0f);
    net_.backward(x.data(), cache, dlogits.data(), dx, nullptr);
  }

  /// Activations after the first conv+relu block (perceptual feature tap).
  std::vector<float> feature_map(const std::vector<float>& x, int batch) const {
    check_batch(x.size(), batch);
    BatchCache cache;
    net_.forward(x.data(), batch, cache, net_.feature_layer() + 1);
    return std::move(cache.acts[net_.feature_layer()]);
  }

  std::size_t feature_numel() const { return net_.feature_shape().numel(); }

 private:
  ConvNet net_;
  std::uint64_t seed_ = 0;
  int trained_epochs_ = 0;
};

// ---------------------------------------------------------------------------
// Training.

struct TrainResult {
  std::vector<double> epoch_losses;
  double final_loss = 0.0;
};

/// Called before the optimizer step with the packed batch; may rewrite the
/// pixels in place (adversarial training and the adaptive defenses do).
/// batch_indices are the dataset positions of the batch rows.
using BatchHook = std::function<void(const Classifier& model, std::vector<float>& batch_x,
                                     const std::vector<int>& batch_y,
                                     const std::vector<int>& batch_indices, int epoch,
                                     int batch_index)>;

/// Called after each epoch (gallery "epochs" strategy snapshots here).
using EpochHook = std::function<void(const Classifier& model, int epoch)>;

inline std::vector<float> pack_images(const std::vector<Image>& images) {
  std::vector<float> out;
  if (images.empty()) return out;
  const std::size_t n = images[0].size();
  out.resize(images.size() * n);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != n) throw ValidationError("pack_images: inconsistent image shapes");
    std::memcpy(out.data() + i * n, images[i].data.data(), n * sizeof(float));
  }
  return out;
}

inline TrainResult train_in_place(Classifier& model, const LabeledDataset& data,
                                  const TrainSpec& spec, const BatchHook& batch_hook = nullptr,
                                  const EpochHook& epoch_hook = nullptr) {
  spec.validate();
  if (data.size() == 0) throw ValidationError("train_in_place: empty dataset");
  data.validate();
  if (data.num_classes != model.num_classes())
    throw ValidationError("train_in_place: dataset k=" + std::to_string(data.num_classes) +
                          " but model k=" + std::to_string(model.num_classes()));
  Shape3 in = model.input_shape();
  if (!(Shape3{data.images[0].channels, data.images[0].height, data.images[0].width} == in))
    throw ValidationError("train_in_place: dataset image shape does not match model input");

  ConvNet& net = model.net();
  const std::size_t L = net.num_layers();
  std::vector<std::vector<float>> velocity(L);
  for (std::size_t l = 0; l < L; ++l) velocity[l].assign(net.layer(l).param_count(), 0.0f);

  const int n = static_cast<int>(data.size());
  const std::size_t numel = in.numel();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  TrainResult result;
  const float lr0 = static_cast<float>(spec.learning_rate);
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(spec.seed, seed_stream::kBatchShuffle, epoch));
    shuffle_rng.shuffle(order);
    float lr = lr0;
    if (spec.schedule == "cosine")
      lr = static_cast<float>(spec.learning_rate * 0.5 *
                              (1.0 + std::cos(3.14159265358979323846 * epoch / spec.epochs)));

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (int start = 0; start < n; start += spec.batch_size, ++batch_index) {
      const int b = std::min(spec.batch_size, n - start);
      std::vector<float> x(std::size_t(b) * numel);
      std::vector<int> y(b);
      std::vector<int> idxs(b);
      for (int i = 0; i < b; ++i) {
        const int idx = order[start + i];
        std::memcpy(x.data() + std::size_t(i) * numel, data.images[idx].data.data(),
                    numel * sizeof(float));
        y[i] = data.labels[idx];
        idxs[i] = idx;
      }
      if (batch_hook) batch_hook(model, x, y, idxs, epoch, batch_index);

      BatchCache cache;
      net.forward(x.data(), b, cache);
      std::vector<float> dlogits(std::size_t(b) * net.num_classes());
      const double loss =
          softmax_cross_entropy(cache.acts.back().data(), y.data(), b, net.num_classes(), nullptr,
                                dlogits.data(), 1.0f / b);
      if (!std::isfinite(loss))
        throw TrainingError("train_in_place: non-finite loss, training diverged", epoch);
      epoch_loss += loss * b;

      std::vector<std::vector<float>> grads;
      net.backward(x.data(), cache, dlogits.data(), nullptr, &grads);

      const float mu = static_cast<float>(spec.momentum);
      const float wd = static_cast<float>(spec.weight_decay);
      for (std::size_t l = 0; l < L; ++l) {
        float* w = net.layer(l).param_data();
        if (!w) continue;
        float* v = velocity[l].data();
        const float* g = grads[l].data();
        const std::size_t pc = net.layer(l).param_count();
        for (std::size_t i = 0; i < pc; ++i) {
          v[i] = mu * v[i] + g[i] + wd * w[i];
          w[i] -= lr * v[i];
        }
      }
    }
    result.epoch_losses.push_back(epoch_loss / n);
    model.set_trained_epochs(epoch + 1);
    if (epoch_hook) epoch_hook(model, epoch + 1);
  }
  result.final_loss = result.epoch_losses.back();
  return result;
}

/// Trains one surrogate checkpoint from scratch.
inline std::shared_ptr<Classifier> train_surrogate(const LabeledDataset& data,
                                                   const TrainSpec& spec,
                                                   const std::string& arch = "compact") {
  if (data.size() == 0) throw ValidationError("train_surrogate: empty dataset");
  Shape3 in{data.images[0].channels, data.images[0].height, data.images[0].width};
  auto model = std::make_shared<Classifier>(arch, in, data.num_classes, spec.seed);
  train_in_place(*model, data, spec);
  return model;
}

// ---------------------------------------------------------------------------
// Gallery.

struct ModelGallery {
  std::vector<std::shared_ptr<const Classifier>> members;
  std::vector<std::string> provenance;  // one tag per member, e.g. "seed=42 epochs=12"

  std::size_t size() const { return members.size(); }

  void validate() const {
    if (members.empty()) throw ValidationError("ModelGallery: needs at least one member");
    for (const auto& m : members) {
      if (!(m->input_shape() == members[0]->input_shape()) ||
          m->num_classes() != members[0]->num_classes())
        throw ValidationError("ModelGallery: members disagree on input shape or class count");
    }
  }

  int num_classes() const { return members.at(0)->num_classes(); }
  Shape3 input_shape() const { return members.at(0)->input_shape(); }

  /// A single-member view (first checkpoint); ensemble aggregation then
  /// reverts to the vanilla single-model formulas.
  ModelGallery first_member_view() const {
    ModelGallery g;
    g.members = {members.at(0)};
    g.provenance = {provenance.empty() ? std::string("member0") : provenance[0]};
    return g;
  }
};

/// Trains an M-member gallery. Strategy "seeds" varies the training seed per
/// member; "epochs" snapshots one run at M evenly spaced epochs
/// ceil(epochs*j/M), j=1..M.
inline ModelGallery build_gallery(const LabeledDataset& data, const TrainSpec& spec, int members,
                                  const std::string& diversity = "seeds",
                                  const std::string& arch = "compact") {
  if (members < 1) throw ValidationError("build_gallery: M must be >= 1");
  spec.validate();
  ModelGallery gallery;
  if (diversity == "seeds") {
    for (int j = 0; j < members; ++j) {
      TrainSpec member_spec = spec;
      member_spec.seed = derive_seed(spec.seed, seed_stream::kGalleryMember, j);
      auto model = train_surrogate(data, member_spec, arch);
      gallery.members.push_back(model);
      gallery.provenance.push_back("strategy=seeds seed=" + std::to_string(member_spec.seed) +
                                   " epochs=" + std::to_string(spec.epochs));
    }
  } else if (diversity == "epochs") {
    if (data.size() == 0) throw ValidationError("build_gallery: empty dataset");
    Shape3 in{data.images[0].channels, data.images[0].height, data.images[0].width};
    auto model = std::make_shared<Classifier>(arch, in, data.num_classes, spec.seed);
    std::vector<int> snapshots;
    for (int j = 1; j <= members; ++j)
      snapshots.push_back(static_cast<int>(std::ceil(double(spec.epochs) * j / members)));
    train_in_place(*model, data, spec, nullptr, [&](const Classifier& m, int epoch) {
      for (std::size_t s = 0; s < snapshots.size(); ++s) {
        if (snapshots[s] != epoch) continue;
        auto copy = std::make_shared<Classifier>(arch, in, data.num_classes, spec.seed);
        for (std::size_t l = 0; l < copy->net().num_layers(); ++l)
          std::memcpy(copy->net().layer(l).param_data(), m.net().layer(l).param_data(),
                      m.net().layer(l).param_count() * sizeof(float));
        copy->set_trained_epochs(epoch);
        gallery.members.push_back(copy);
        gallery.provenance.push_back("strategy=epochs seed=" + std::to_string(spec.seed) +
                                     " epoch=" + std::to_string(epoch));
      }
    });
  } else {
    throw ValidationError("build_gallery: unknown diversity strategy '" + diversity + "'");
  }
  gallery.validate();
  return gallery;
}

// ---------------------------------------------------------------------------
// Ensemble aggregation. Fixed member order, double accumulation: the result
// is invariant under member permutation to well below 1e-9.

inline double ensemble_loss(const ModelGallery& gallery, const std::vector<float>& x,
                            const std::vector<int>& labels) {
  gallery.validate();
  double total = 0.0;
  for (const auto& m : gallery.members) total += m->mean_ce(x, labels);
  return total / double(gallery.size());
}

inline double ensemble_loss(const ModelGallery& gallery, const std::vector<Image>& batch,
                            const std::vector<int>& labels) {
  return ensemble_loss(gallery, pack_images(batch), labels);
}

/// Mean over members of per-sample cross-entropy input gradients. Shape
/// equals the batch buffer shape. Optionally returns the ensemble loss.
inline std::vector<float> ensemble_input_gradient(const ModelGallery& gallery,
                                                  const std::vector<float>& x,
                                                  const std::vector<int>& labels,
                                                  double* loss_out = nullptr) {
  gallery.validate();
  const int batch = static_cast<int>(labels.size());
  gallery.members[0]->check_batch(x.size(), batch);

  std::vector<double> accum(x.size(), 0.0);
  std::vector<float> member_grad(x.size());
  std::vector<double> per_sample(batch);
  double loss_total = 0.0;
  for (const auto& m : gallery.members) {
    m->ce_input_gradients(x, labels, member_grad.data(), per_sample.data());
    for (std::size_t i = 0; i < accum.size(); ++i) accum[i] += member_grad[i];
    double batch_total = 0.0;
    for (int b = 0; b < batch; ++b) batch_total += per_sample[b];
    loss_total += batch_total / batch;
  }
  const double inv = 1.0 / double(gallery.size());
  std::vector<float> grad(x.size());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = static_cast<float>(accum[i] * inv);
  if (loss_out) *loss_out = loss_total * inv;
  return grad;
}

inline std::vector<float> ensemble_input_gradient(const ModelGallery& gallery,
                                                  const std::vector<Image>& batch,
                                                  const std::vector<int>& labels,
                                                  double* loss_out = nullptr) {
  return ensemble_input_gradient(gallery, pack_images(batch), labels, loss_out);
}

// ---------------------------------------------------------------------------
// Checkpoint archive: 8-byte magic, little-endian u32 JSON header length,
// JSON header (architecture, k, input shape, seed, epochs, provenance,
// per-layer parameter counts), then raw float32 LE parameters per layer.

constexpr char kCheckpointMagic[8] = {'D', 'S', 'C', 'K', 'P', 'T', '0', '1'};

inline void save_checkpoint(const Classifier& model, const std::filesystem::path& path,
                            const std::string& provenance = "") {
  nlohmann::json header;
  header["format_version"] = 1;
  header["arch"] = model.arch();
  header["num_classes"] = model.num_classes();
  Shape3 in = model.input_shape();
  header["input"] = {{"channels", in.c}, {"height", in.h}, {"width", in.w}};
  header["seed"] = model.seed();
  header["trained_epochs"] = model.trained_epochs();
  header["provenance"] = provenance;
  std::vector<std::size_t> counts;
  for (std::size_t l = 0; l < model.net().num_layers(); ++l)
    counts.push_back(model.net().layer(l).param_count());
  header["param_counts"] = counts;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string hs = header.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), hs.size());
  for (std::size_t l = 0; l < model.net().num_layers(); ++l) {
    const Layer& layer = model.net().layer(l);
    if (layer.param_count())
      out.write(reinterpret_cast<const char*>(layer.param_data()),
                layer.param_count() * sizeof(float));
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

inline std::shared_ptr<Classifier> load_checkpoint(const std::filesystem::path& path,
                                                   std::string* provenance = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("load_checkpoint: bad magic in " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw IoError("load_checkpoint: truncated header in " + path.string());
  nlohmann::json header = nlohmann::json::parse(hs);

  Shape3 shape{header["input"]["channels"].get<int>(), header["input"]["height"].get<int>(),
               header["input"]["width"].get<int>()};
  auto model = std::make_shared<Classifier>(header["arch"].get<std::string>(), shape,
                                            header["num_classes"].get<int>(),
                                            header["seed"].get<std::uint64_t>());
  model->set_trained_epochs(header["trained_epochs"].get<int>());
  const auto counts = header["param_counts"].get<std::vector<std::size_t>>();
  if (counts.size() != model->net().num_layers())
    throw IoError("load_checkpoint: layer count mismatch in " + path.string());
  for (std::size_t l = 0; l < counts.size(); ++l) {
    Layer& layer = model->net().layer(l);
    if (counts[l] != layer.param_count())
      throw IoError("load_checkpoint: parameter count mismatch at layer " + std::to_string(l));
    if (layer.param_count())
      in.read(reinterpret_cast<char*>(layer.param_data()), layer.param_count() * sizeof(float));
  }
  if (!in) throw IoError("load_checkpoint: truncated payload in " + path.string());
  if (provenance) *provenance = header.value("provenance", "");
  return model;
}

}  // namespace dualshift

#endif  // DUALSHIFT_MODEL_ZOO_HPP

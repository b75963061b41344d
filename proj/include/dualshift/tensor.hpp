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

#ifndef DUALSHIFT_TENSOR_HPP
#define DUALSHIFT_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "dualshift/common.hpp"

namespace dualshift {

/// A single CHW float image, pixels nominally in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // channels*height*width, channel-major

  Image() = default;
  Image(int c, int h, int w) : channels(c), height(h), width(w), data(size_t(c) * h * w, 0.0f) {}

  std::size_t size() const { return data.size(); }
  float& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Images plus integer labels in [0, num_classes).
struct LabeledDataset {
  std::string name;
  int num_classes = 0;
  std::vector<Image> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }

  void validate() const {
    if (labels.size() != images.size())
      throw ValidationError("dataset '" + name + "': label count " +
                            std::to_string(labels.size()) + " != image count " +
                            std::to_string(images.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes)
        throw ValidationError("dataset '" + name + "': label " + std::to_string(labels[i]) +
                              " at index " + std::to_string(i) + " outside [0," +
                              std::to_string(num_classes) + ")");
    }
    for (std::size_t i = 1; i < images.size(); ++i) {
      if (!images[i].same_shape(images[0]))
        throw ValidationError("dataset '" + name + "': image " + std::to_string(i) +
                              " shape differs from image 0");
    }
  }
};

/// Per-class index lists; together they cover [0, dataset size) exactly once.
struct ClassPartition {
  std::vector<std::vector<int>> indices;  // indices[p] = dataset positions of class p, in order

  int num_classes() const { return static_cast<int>(indices.size()); }
  std::size_t count(int p) const { return indices[p].size(); }
};

inline ClassPartition partition_by_class(const LabeledDataset& ds) {
  if (ds.size() == 0) throw ValidationError("partition_by_class: empty dataset");
  ds.validate();
  ClassPartition part;
  part.indices.assign(ds.num_classes, {});
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    part.indices[ds.labels[i]].push_back(static_cast<int>(i));
  return part;
}

/// Elementwise min(max(x, lo), hi). Idempotent.
inline Image clamp_image(const Image& x, float lo, float hi) {
  if (!(lo < hi)) throw ValidationError("clamp_image: lo must be < hi");
  Image out = x;
  for (float& v : out.data) v = std::min(std::max(v, lo), hi);
  return out;
}

inline void clamp_in_place(Image& x, float lo, float hi) {
  if (!(lo < hi)) throw ValidationError("clamp_in_place: lo must be < hi");
  for (float& v : x.data) v = std::min(std::max(v, lo), hi);
}

}  // namespace dualshift

#endif  // DUALSHIFT_TENSOR_HPP

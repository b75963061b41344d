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

// Dataset persistence.
//
// A dataset directory holds:
//   manifest.json     versioned manifest (schema below)
//   images/NNNNN.png  one lossless 8-bit image per sample
//   dataset.tnsr      optional raw float32 sidecar, bit-exact pixels
//
// Raw tensor sidecar layout (little endian):
//   4 bytes  magic "TNSR"
//   u32      dtype code (1 = float32)
//   u32      rank
//   u64[rank] dims            (datasets use rank 4: N,C,H,W)
//   payload  dtype elements in row-major order
//
// CIFAR-10 binary batches (label byte + 3072 pixel bytes per record) are
// also recognized, either as a single .bin file or a directory of
// data_batch_*.bin files.

#ifndef DUALSHIFT_DATA_IO_HPP
#define DUALSHIFT_DATA_IO_HPP

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualshift/common.hpp"
#include "dualshift/png_io.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Raw tensor sidecar.

constexpr char kTensorMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kDtypeF32 = 1;

inline void write_tensor_file(const fs::path& path, const std::vector<std::uint64_t>& dims,
                              const float* data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_tensor_file: cannot open " + path.string());
  out.write(kTensorMagic, 4);
  const std::uint32_t dtype = kDtypeF32;
  const std::uint32_t rank = static_cast<std::uint32_t>(dims.size());
  out.write(reinterpret_cast<const char*>(&dtype), 4);
  out.write(reinterpret_cast<const char*>(&rank), 4);
  std::uint64_t count = 1;
  for (std::uint64_t d : dims) {
    out.write(reinterpret_cast<const char*>(&d), 8);
    count *= d;
  }
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
  if (!out) throw IoError("write_tensor_file: write failed for " + path.string());
}

inline std::vector<float> read_tensor_file(const fs::path& path,
                                           std::vector<std::uint64_t>* dims_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor_file: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTensorMagic, 4) != 0)
    throw IoError("read_tensor_file: bad magic in " + path.string());
  std::uint32_t dtype = 0, rank = 0;
  in.read(reinterpret_cast<char*>(&dtype), 4);
  in.read(reinterpret_cast<char*>(&rank), 4);
  if (dtype != kDtypeF32)
    throw IoError("read_tensor_file: unsupported dtype code " + std::to_string(dtype));
  if (rank > 8) throw IoError("read_tensor_file: implausible rank in " + path.string());
  std::vector<std::uint64_t> dims(rank);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    in.read(reinterpret_cast<char*>(&d), 8);
    count *= d;
  }
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 4));
  if (!in) throw IoError("read_tensor_file: truncated payload in " + path.string());
  if (dims_out) *dims_out = dims;
  return data;
}

// ---------------------------------------------------------------------------
// Manifest.

struct DatasetManifest {
  std::string name;
  int num_classes = 0;
  int sample_count = 0;
  int channels = 0, height = 0, width = 0;
  // Perturbation metadata (zeros for clean datasets).
  double epsilon = 0.0;
  int delta_y = 0;
  std::vector<std::array<double, 3>> class_color_offsets;
  nlohmann::json generator_config;  // snapshot, may be null

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["name"] = name;
    j["num_classes"] = num_classes;
    j["sample_count"] = sample_count;
    j["image_shape"] = {{"channels", channels}, {"height", height}, {"width", width}};
    j["perturbation"] = {{"epsilon", epsilon},
                         {"delta_y", delta_y},
                         {"class_color_offsets", class_color_offsets}};
    j["generator_config"] = generator_config;
    return j;
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    if (j.value("format_version", 0) != 1)
      throw IoError("manifest: unsupported format_version");
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.num_classes = j.at("num_classes").get<int>();
    m.sample_count = j.at("sample_count").get<int>();
    m.channels = j.at("image_shape").at("channels").get<int>();
    m.height = j.at("image_shape").at("height").get<int>();
    m.width = j.at("image_shape").at("width").get<int>();
    if (j.contains("perturbation")) {
      const auto& p = j.at("perturbation");
      m.epsilon = p.value("epsilon", 0.0);
      m.delta_y = p.value("delta_y", 0);
      if (p.contains("class_color_offsets"))
        m.class_color_offsets = p.at("class_color_offsets").get<std::vector<std::array<double, 3>>>();
    }
    if (j.contains("generator_config")) m.generator_config = j.at("generator_config");
    return m;
  }
};

inline std::string crc32_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("crc32: cannot open " + file.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(in.gcount()));
  }
  char hex[9];
  std::snprintf(hex, sizeof(hex), "%08lx", static_cast<unsigned long>(crc));
  return hex;
}

// ---------------------------------------------------------------------------
// Export.

/// Writes one PNG per sample, the manifest, and (by default) the raw float
/// sidecar that reproduces pixels bit-exactly. PNGs reproduce them within
/// 1/255 quantization.
inline void export_unlearnable_dataset(const LabeledDataset& ds, const DatasetManifest& manifest,
                                       const fs::path& dest, bool raw_sidecar = true) {
  ds.validate();
  if (ds.size() == 0) throw ValidationError("export: empty dataset");
  if (manifest.num_classes != ds.num_classes)
    throw ValidationError("export: manifest k=" + std::to_string(manifest.num_classes) +
                          " but dataset k=" + std::to_string(ds.num_classes));
  if (manifest.sample_count != static_cast<int>(ds.size()))
    throw ValidationError("export: manifest sample count " +
                          std::to_string(manifest.sample_count) + " but dataset has " +
                          std::to_string(ds.size()));
  const Image& first = ds.images[0];
  if (manifest.channels != first.channels || manifest.height != first.height ||
      manifest.width != first.width)
    throw ValidationError("export: manifest image shape does not match dataset");

  std::error_code ec;
  fs::create_directories(dest / "images", ec);
  if (ec) throw IoError("export: cannot create " + (dest / "images").string());

  nlohmann::json j = manifest.to_json();
  std::vector<std::string> files, checksums;
  files.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "images/%05zu.png", i);
    const fs::path p = dest / buf;
    write_png(ds.images[i], p);
    files.emplace_back(buf);
    checksums.push_back(crc32_hex(p));
  }
  j["files"] = files;
  j["checksums"] = checksums;
  j["labels"] = ds.labels;

  if (raw_sidecar) {
    std::vector<float> flat(ds.size() * first.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
      std::memcpy(flat.data() + i * first.size(), ds.images[i].data.data(),
                  first.size() * sizeof(float));
    write_tensor_file(dest / "dataset.tnsr",
                      {ds.size(), std::uint64_t(first.channels), std::uint64_t(first.height),
                       std::uint64_t(first.width)},
                      flat.data());
    j["raw_sidecar"] = "dataset.tnsr";
  }

  std::ofstream out(dest / "manifest.json");
  if (!out) throw IoError("export: cannot write manifest in " + dest.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("export: manifest write failed in " + dest.string());
}

// ---------------------------------------------------------------------------
// Import.

namespace detail {

inline LabeledDataset load_manifest_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("load_dataset: cannot open " + (dir / "manifest.json").string());
  nlohmann::json j;
  in >> j;
  const DatasetManifest m = DatasetManifest::from_json(j);

  LabeledDataset ds;
  ds.name = m.name;
  ds.num_classes = m.num_classes;
  ds.labels = j.at("labels").get<std::vector<int>>();
  const auto files = j.value("files", std::vector<std::string>{});
  const auto checksums = j.value("checksums", std::vector<std::string>{});

  // Verify integrity of the lossless image files when present.
  if (!files.empty() && checksums.size() == files.size()) {
    for (std::size_t i = 0; i < files.size(); ++i) {
      const fs::path p = dir / files[i];
      if (!fs::exists(p)) continue;
      const std::string got = crc32_hex(p);
      if (got != checksums[i])
        throw IoError("load_dataset: checksum mismatch for " + p.string() + " (manifest " +
                      checksums[i] + ", file " + got + ")");
    }
  }

  const std::string sidecar = j.value("raw_sidecar", std::string());
  if (!sidecar.empty() && fs::exists(dir / sidecar)) {
    std::vector<std::uint64_t> dims;
    const std::vector<float> flat = read_tensor_file(dir / sidecar, &dims);
    if (dims.size() != 4) throw IoError("load_dataset: sidecar rank != 4");
    const std::size_t n = dims[0];
    const int c = int(dims[1]), h = int(dims[2]), w = int(dims[3]);
    const std::size_t numel = std::size_t(c) * h * w;
    ds.images.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ds.images[i] = Image(c, h, w);
      std::memcpy(ds.images[i].data.data(), flat.data() + i * numel, numel * sizeof(float));
    }
  } else {
    ds.images.reserve(files.size());
    for (const auto& f : files) ds.images.push_back(read_png(dir / f));
  }

  if (static_cast<int>(ds.size()) != m.sample_count)
    throw IoError("load_dataset: manifest sample count mismatch in " + dir.string());
  ds.validate();
  return ds;
}

inline void load_cifar_bin_file(const fs::path& file, LabeledDataset& ds) {
  constexpr int kDim = 32, kPlane = kDim * kDim, kRecord = 1 + 3 * kPlane;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot open " + file.string());
  std::vector<unsigned char> rec(kRecord);
  while (in.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
    const int label = rec[0];
    if (label < 0 || label >= 10)
      throw ValidationError("load_dataset: CIFAR label " + std::to_string(label) +
                            " outside [0,10)");
    Image img(3, kDim, kDim);
    for (int i = 0; i < 3 * kPlane; ++i) img.data[i] = rec[1 + i] / 255.0f;
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  if (in.gcount() != 0) throw IoError("load_dataset: truncated CIFAR record in " + file.string());
}

}  // namespace detail

/// Per-class subsetting: keeps min(limit, available) samples per class,
/// chosen by ascending original index.
inline LabeledDataset limit_per_class(const LabeledDataset& ds, int limit) {
  if (limit < 0) throw ValidationError("limit_per_class: negative limit");
  LabeledDataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  std::vector<int> taken(ds.num_classes, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int y = ds.labels[i];
    if (taken[y] >= limit) continue;
    ++taken[y];
    out.images.push_back(ds.images[i]);
    out.labels.push_back(y);
  }
  return out;
}

/// Loads a dataset from a manifest directory, a CIFAR-10 binary batch file,
/// or a directory of CIFAR-10 data_batch_*.bin files.
inline LabeledDataset load_dataset(const fs::path& source,
                                   std::optional<int> limit = std::nullopt) {
  if (!fs::exists(source)) throw IoError("load_dataset: no such path " + source.string());

  LabeledDataset ds;
  if (fs::is_directory(source)) {
    if (fs::exists(source / "manifest.json")) {
      ds = detail::load_manifest_dataset(source);
    } else {
      std::vector<fs::path> bins;
      for (const auto& e : fs::directory_iterator(source)) {
        const std::string fn = e.path().filename().string();
        if (fn.rfind("data_batch_", 0) == 0 && fn.size() > 4 &&
            fn.substr(fn.size() - 4) == ".bin")
          bins.push_back(e.path());
      }
      if (bins.empty())
        throw IoError("load_dataset: " + source.string() +
                      " has neither manifest.json nor CIFAR data_batch_*.bin files");
      std::sort(bins.begin(), bins.end());
      ds.name = source.filename().string();
      ds.num_classes = 10;
      for (const auto& b : bins) detail::load_cifar_bin_file(b, ds);
      ds.validate();
    }
  } else {
    if (source.extension() != ".bin")
      throw IoError("load_dataset: unrecognized file " + source.string());
    ds.name = source.stem().string();
    ds.num_classes = 10;
    detail::load_cifar_bin_file(source, ds);
    ds.validate();
  }

  if (limit.has_value()) return limit_per_class(ds, *limit);
  return ds;
}

}  // namespace dualshift

#endif  // DUALSHIFT_DATA_IO_HPP

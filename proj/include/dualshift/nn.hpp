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

// Small CNN stack with hand-rolled forward/backward.
//
// Every sample flows through the net independently (im2col GEMM per sample,
// fixed contraction order), so batched execution is bitwise identical to
// per-sample execution and results do not depend on the worker count.
// Cross-sample reductions (parameter gradients, batch losses) always run in
// ascending sample order.

#ifndef DUALSHIFT_NN_HPP
#define DUALSHIFT_NN_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/rng.hpp"

namespace dualshift {

struct Shape3 {
  int c = 0, h = 0, w = 0;
  std::size_t numel() const { return std::size_t(c) * h * w; }
  bool operator==(const Shape3& o) const { return c == o.c && h == o.h && w == o.w; }
};

namespace detail {

// C (m x n) = A (m x k) * B (k x n), all row-major, k ascending per element.
inline void gemm_nn(const float* A, const float* B, float* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    float* Ci = C + std::size_t(i) * n;
    std::memset(Ci, 0, sizeof(float) * n);
    const float* Ai = A + std::size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const float a = Ai[p];
      const float* Bp = B + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) Ci[j] += a * Bp[j];
    }
  }
}

// Dot product with eight fixed-lane accumulators; deterministic and
// auto-vectorizable without reassociation flags.
inline float dot8(const float* a, const float* b, int n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int j = 0;
  for (; j + 8 <= n; j += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[j + l] * b[j + l];
  for (; j < n; ++j) acc[j & 7] += a[j] * b[j];
  float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
  float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
  return (s01 + s23) + (s45 + s67);
}

inline float sum8(const float* a, int n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int j = 0;
  for (; j + 8 <= n; j += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[j + l];
  for (; j < n; ++j) acc[j & 7] += a[j];
  float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
  float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
  return (s01 + s23) + (s45 + s67);
}

inline void axpy(float alpha, const float* x, float* y, int n) {
  for (int j = 0; j < n; ++j) y[j] += alpha * x[j];
}

// --- 3x3 stride-1 pad-1 convolution plumbing, shared by Conv3x3 and
// ResidualBlock. Parameter layout: weights (out_c x in_c*9), then bias.

struct ConvDims {
  int in_c, h, w, out_c;
  int plane() const { return h * w; }
  int rows() const { return in_c * 9; }
  std::size_t weight_count() const { return std::size_t(out_c) * rows(); }
  std::size_t param_count() const { return weight_count() + out_c; }
  // im2col columns plus a transposed-weight panel for backward.
  std::size_t scratch_count() const {
    return std::size_t(rows()) * plane() + std::size_t(rows()) * out_c;
  }
};

inline void im2col3x3(const float* x, const ConvDims& d, float* cols) {
  const int H = d.h, W = d.w;
  for (int ic = 0; ic < d.in_c; ++ic) {
    const float* xc = x + std::size_t(ic) * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = cols + (std::size_t(ic) * 9 + ky * 3 + kx) * H * W;
        for (int oy = 0; oy < H; ++oy) {
          const int iy = oy + ky - 1;
          float* out = row + std::size_t(oy) * W;
          if (iy < 0 || iy >= H) {
            std::memset(out, 0, sizeof(float) * W);
            continue;
          }
          const float* src = xc + std::size_t(iy) * W;
          if (kx == 1) {
            std::memcpy(out, src, sizeof(float) * W);
          } else {
            for (int ox = 0; ox < W; ++ox) {
              const int ix = ox + kx - 1;
              out[ox] = (ix < 0 || ix >= W) ? 0.0f : src[ix];
            }
          }
        }
      }
    }
  }
}

inline void col2im3x3(const float* cols, const ConvDims& d, float* dx) {
  const int H = d.h, W = d.w;
  std::memset(dx, 0, sizeof(float) * std::size_t(d.in_c) * H * W);
  for (int ic = 0; ic < d.in_c; ++ic) {
    float* xc = dx + std::size_t(ic) * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = cols + (std::size_t(ic) * 9 + ky * 3 + kx) * H * W;
        for (int oy = 0; oy < H; ++oy) {
          const int iy = oy + ky - 1;
          if (iy < 0 || iy >= H) continue;
          float* dst = xc + std::size_t(iy) * W;
          const float* src = row + std::size_t(oy) * W;
          for (int ox = 0; ox < W; ++ox) {
            const int ix = ox + kx - 1;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline void conv3x3_forward(const float* x, const float* params, const ConvDims& d, float* y,
                            float* scratch) {
  float* cols = scratch;
  im2col3x3(x, d, cols);
  gemm_nn(params, cols, y, d.out_c, d.rows(), d.plane());
  const float* bias = params + d.weight_count();
  for (int oc = 0; oc < d.out_c; ++oc) {
    float* yr = y + std::size_t(oc) * d.plane();
    const float b = bias[oc];
    for (int p = 0; p < d.plane(); ++p) yr[p] += b;
  }
}

// dx and dparams may each be null. dparams receives += contributions
// (caller zeroes), so a block can accumulate both its convs independently.
inline void conv3x3_backward(const float* x, const float* params, const ConvDims& d,
                             const float* dy, float* dx, float* dparams, float* scratch) {
  const int K = d.rows();
  const int N = d.plane();
  float* cols = scratch;
  float* wt = scratch + std::size_t(K) * N;
  if (dx) {
    for (int oc = 0; oc < d.out_c; ++oc)
      for (int p = 0; p < K; ++p) wt[std::size_t(p) * d.out_c + oc] = params[std::size_t(oc) * K + p];
    gemm_nn(wt, dy, cols, K, d.out_c, N);
    col2im3x3(cols, d, dx);
  }
  if (dparams) {
    im2col3x3(x, d, cols);
    for (int oc = 0; oc < d.out_c; ++oc) {
      const float* dyr = dy + std::size_t(oc) * N;
      float* dwr = dparams + std::size_t(oc) * K;
      for (int p = 0; p < K; ++p) dwr[p] += dot8(dyr, cols + std::size_t(p) * N, N);
    }
    float* db = dparams + d.weight_count();
    for (int oc = 0; oc < d.out_c; ++oc) db[oc] += sum8(dy + std::size_t(oc) * N, N);
  }
}

inline void init_conv_params(float* params, const ConvDims& d, Rng& rng) {
  const double limit = std::sqrt(6.0 / (d.in_c * 9));
  const std::size_t wn = d.weight_count();
  for (std::size_t i = 0; i < wn; ++i) params[i] = static_cast<float>(rng.uniform(-limit, limit));
  for (std::size_t i = 0; i < std::size_t(d.out_c); ++i) params[wn + i] = 0.0f;
}

}  // namespace detail

/// Per-call scratch for one sample's pass; sized once, reused across layers.
struct SampleScratch {
  std::vector<float> data;
  float* get(std::size_t n) {
    if (data.size() < n) data.resize(n);
    return data.data();
  }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Shape3 in_shape() const = 0;
  virtual Shape3 out_shape() const = 0;
  virtual std::size_t param_count() const { return 0; }
  virtual float* param_data() { return nullptr; }
  virtual const float* param_data() const { return nullptr; }
  virtual std::size_t aux_per_sample() const { return 0; }
  virtual std::size_t scratch_per_sample() const { return 0; }
  virtual void init_params(Rng&) {}

  // Single-sample pass. aux receives whatever backward needs (pool argmax).
  virtual void forward1(const float* x, float* y, std::int32_t* aux,
                        SampleScratch& scratch) const = 0;
  // dparams, when non-null, receives this sample's parameter-gradient
  // contribution (param_count floats, pre-zeroed by the caller).
  virtual void backward1(const float* x, const float* y, const float* dy, float* dx,
                         const std::int32_t* aux, SampleScratch& scratch,
                         float* dparams) const = 0;
};

// ---------------------------------------------------------------------------
class Conv3x3 : public Layer {
 public:
  Conv3x3(Shape3 in, int out_channels)
      : dims_{in.c, in.h, in.w, out_channels}, params_(dims_.param_count(), 0.0f) {}

  std::string kind() const override { return "conv3x3"; }
  Shape3 in_shape() const override { return {dims_.in_c, dims_.h, dims_.w}; }
  Shape3 out_shape() const override { return {dims_.out_c, dims_.h, dims_.w}; }
  std::size_t param_count() const override { return params_.size(); }
  float* param_data() override { return params_.data(); }
  const float* param_data() const override { return params_.data(); }
  std::size_t scratch_per_sample() const override { return dims_.scratch_count(); }

  void init_params(Rng& rng) override { detail::init_conv_params(params_.data(), dims_, rng); }

  void forward1(const float* x, float* y, std::int32_t*, SampleScratch& scratch) const override {
    detail::conv3x3_forward(x, params_.data(), dims_, y, scratch.get(scratch_per_sample()));
  }

  void backward1(const float* x, const float*, const float* dy, float* dx, const std::int32_t*,
                 SampleScratch& scratch, float* dparams) const override {
    detail::conv3x3_backward(x, params_.data(), dims_, dy, dx, dparams,
                             scratch.get(scratch_per_sample()));
  }

 private:
  detail::ConvDims dims_;
  std::vector<float> params_;
};

// ---------------------------------------------------------------------------
class Relu : public Layer {
 public:
  explicit Relu(Shape3 in) : in_(in) {}
  std::string kind() const override { return "relu"; }
  Shape3 in_shape() const override { return in_; }
  Shape3 out_shape() const override { return in_; }

  void forward1(const float* x, float* y, std::int32_t*, SampleScratch&) const override {
    const std::size_t n = in_.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  }

  void backward1(const float*, const float* y, const float* dy, float* dx, const std::int32_t*,
                 SampleScratch&, float*) const override {
    if (!dx) return;
    const std::size_t n = in_.numel();
    for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
  }

 private:
  Shape3 in_;
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties resolve to the first element in scan order.
class MaxPool2 : public Layer {
 public:
  explicit MaxPool2(Shape3 in) : in_(in), out_{in.c, in.h / 2, in.w / 2} {
    if (in.h % 2 != 0 || in.w % 2 != 0)
      throw ValidationError("maxpool2: spatial dims must be even, got " + std::to_string(in.h) +
                            "x" + std::to_string(in.w));
  }
  std::string kind() const override { return "maxpool2"; }
  Shape3 in_shape() const override { return in_; }
  Shape3 out_shape() const override { return out_; }
  std::size_t aux_per_sample() const override { return out_.numel(); }

  void forward1(const float* x, float* y, std::int32_t* aux, SampleScratch&) const override {
    const int W = in_.w, OH = out_.h, OW = out_.w;
    for (int c = 0; c < in_.c; ++c) {
      const float* xc = x + std::size_t(c) * in_.h * W;
      float* yc = y + std::size_t(c) * OH * OW;
      std::int32_t* ac = aux + std::size_t(c) * OH * OW;
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
          const int base = (oy * 2) * W + ox * 2;
          int best = base;
          float bv = xc[base];
          const int cand[3] = {base + 1, base + W, base + W + 1};
          for (int t = 0; t < 3; ++t)
            if (xc[cand[t]] > bv) {
              bv = xc[cand[t]];
              best = cand[t];
            }
          yc[oy * OW + ox] = bv;
          ac[oy * OW + ox] = best;
        }
      }
    }
  }

  void backward1(const float*, const float*, const float* dy, float* dx, const std::int32_t* aux,
                 SampleScratch&, float*) const override {
    if (!dx) return;
    std::memset(dx, 0, sizeof(float) * in_.numel());
    const int plane_in = in_.h * in_.w, plane_out = out_.h * out_.w;
    for (int c = 0; c < in_.c; ++c) {
      const float* dyc = dy + std::size_t(c) * plane_out;
      const std::int32_t* ac = aux + std::size_t(c) * plane_out;
      float* dxc = dx + std::size_t(c) * plane_in;
      for (int p = 0; p < plane_out; ++p) dxc[ac[p]] += dyc[p];
    }
  }

 private:
  Shape3 in_;
  Shape3 out_;
};

// ---------------------------------------------------------------------------
// Fully connected head. Params: weights (out x in), then bias.
class Linear : public Layer {
 public:
  Linear(Shape3 in, int out) : in_(in), out_{out, 1, 1} {
    params_.assign(std::size_t(out) * in.numel() + out, 0.0f);
  }
  std::string kind() const override { return "linear"; }
  Shape3 in_shape() const override { return in_; }
  Shape3 out_shape() const override { return out_; }
  std::size_t param_count() const override { return params_.size(); }
  float* param_data() override { return params_.data(); }
  const float* param_data() const override { return params_.data(); }

  void init_params(Rng& rng) override {
    const std::size_t D = in_.numel();
    const double limit = std::sqrt(6.0 / static_cast<double>(D));
    const std::size_t wn = std::size_t(out_.c) * D;
    for (std::size_t i = 0; i < wn; ++i) params_[i] = static_cast<float>(rng.uniform(-limit, limit));
    for (std::size_t i = wn; i < params_.size(); ++i) params_[i] = 0.0f;
  }

  void forward1(const float* x, float* y, std::int32_t*, SampleScratch&) const override {
    const int D = static_cast<int>(in_.numel());
    const float* bias = params_.data() + std::size_t(out_.c) * D;
    for (int c = 0; c < out_.c; ++c)
      y[c] = detail::dot8(params_.data() + std::size_t(c) * D, x, D) + bias[c];
  }

  void backward1(const float* x, const float*, const float* dy, float* dx, const std::int32_t*,
                 SampleScratch&, float* dparams) const override {
    const int D = static_cast<int>(in_.numel());
    if (dx) {
      std::memset(dx, 0, sizeof(float) * D);
      for (int c = 0; c < out_.c; ++c)
        detail::axpy(dy[c], params_.data() + std::size_t(c) * D, dx, D);
    }
    if (dparams) {
      for (int c = 0; c < out_.c; ++c) detail::axpy(dy[c], x, dparams + std::size_t(c) * D, D);
      float* db = dparams + std::size_t(out_.c) * D;
      for (int c = 0; c < out_.c; ++c) db[c] += dy[c];
    }
  }

 private:
  Shape3 in_;
  Shape3 out_;
  std::vector<float> params_;
};

// ---------------------------------------------------------------------------
// Identity-skip residual block: y = relu(conv2(relu(conv1(x))) + x).
// Channel count is preserved. Params: conv1 then conv2.
class ResidualBlock : public Layer {
 public:
  explicit ResidualBlock(Shape3 in) : in_(in), dims_{in.c, in.h, in.w, in.c} {
    params_.assign(2 * dims_.param_count(), 0.0f);
  }
  std::string kind() const override { return "residual"; }
  Shape3 in_shape() const override { return in_; }
  Shape3 out_shape() const override { return in_; }
  std::size_t param_count() const override { return params_.size(); }
  float* param_data() override { return params_.data(); }
  const float* param_data() const override { return params_.data(); }
  std::size_t scratch_per_sample() const override {
    return 3 * in_.numel() + dims_.scratch_count();
  }

  void init_params(Rng& rng) override {
    detail::init_conv_params(params_.data(), dims_, rng);
    detail::init_conv_params(params_.data() + dims_.param_count(), dims_, rng);
  }

  void forward1(const float* x, float* y, std::int32_t*, SampleScratch& scratch) const override {
    const std::size_t n = in_.numel();
    float* t1 = scratch.get(scratch_per_sample());
    float* t2 = t1 + n;
    float* conv_scratch = t2 + 2 * n;
    detail::conv3x3_forward(x, params_.data(), dims_, t1, conv_scratch);
    for (std::size_t i = 0; i < n; ++i) t1[i] = t1[i] > 0.0f ? t1[i] : 0.0f;
    detail::conv3x3_forward(t1, params_.data() + dims_.param_count(), dims_, t2, conv_scratch);
    for (std::size_t i = 0; i < n; ++i) {
      const float v = t2[i] + x[i];
      y[i] = v > 0.0f ? v : 0.0f;
    }
  }

  void backward1(const float* x, const float* y, const float* dy, float* dx, const std::int32_t*,
                 SampleScratch& scratch, float* dparams) const override {
    const std::size_t n = in_.numel();
    float* t1 = scratch.get(scratch_per_sample());
    float* dsum = t1 + n;
    float* dt1 = dsum + n;
    float* conv_scratch = dt1 + n;
    // Recompute the hidden activation; cheaper than caching it per sample.
    detail::conv3x3_forward(x, params_.data(), dims_, t1, conv_scratch);
    for (std::size_t i = 0; i < n; ++i) t1[i] = t1[i] > 0.0f ? t1[i] : 0.0f;
    for (std::size_t i = 0; i < n; ++i) dsum[i] = y[i] > 0.0f ? dy[i] : 0.0f;
    float* dp2 = dparams ? dparams + dims_.param_count() : nullptr;
    detail::conv3x3_backward(t1, params_.data() + dims_.param_count(), dims_, dsum, dt1, dp2,
                             conv_scratch);
    for (std::size_t i = 0; i < n; ++i) dt1[i] = t1[i] > 0.0f ? dt1[i] : 0.0f;
    detail::conv3x3_backward(x, params_.data(), dims_, dt1, dx, dparams, conv_scratch);
    if (dx)
      for (std::size_t i = 0; i < n; ++i) dx[i] += dsum[i];
  }

 private:
  Shape3 in_;
  detail::ConvDims dims_;
  std::vector<float> params_;
};

// ---------------------------------------------------------------------------

/// Forward activations and pooling argmaxes for one batch; owned by the
/// caller so a const net can serve concurrent calls.
struct BatchCache {
  std::vector<std::vector<float>> acts;        // acts[l]: batch x out_numel of layer l
  std::vector<std::vector<std::int32_t>> aux;  // aux[l]: batch x aux_per_sample
  int batch = 0;
};

class ConvNet {
 public:
  ConvNet(std::string arch, Shape3 input, int num_classes)
      : arch_(std::move(arch)), input_(input), num_classes_(num_classes) {
    if (num_classes_ < 2) throw ValidationError("ConvNet: need at least 2 classes");
    build();
  }

  const std::string& arch() const { return arch_; }
  Shape3 input_shape() const { return input_; }
  int num_classes() const { return num_classes_; }
  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  /// Index of the activation tapped as the perceptual feature map: the
  /// output of the first conv+relu pair.
  std::size_t feature_layer() const { return feature_layer_; }
  Shape3 feature_shape() const { return layers_[feature_layer_]->out_shape(); }

  std::size_t total_param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->param_count();
    return n;
  }

  void init_params(std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Rng rng(derive_seed(seed, seed_stream::kWeightInit, i));
      layers_[i]->init_params(rng);
    }
  }

  /// Runs layers [0, upto) for a whole batch. Parallel across samples;
  /// bitwise batch-size invariant.
  void forward(const float* x, int batch, BatchCache& cache, std::size_t upto = SIZE_MAX) const {
    const std::size_t L = upto == SIZE_MAX ? layers_.size() : upto;
    cache.batch = batch;
    cache.acts.resize(layers_.size());
    cache.aux.resize(layers_.size());
    for (std::size_t l = 0; l < L; ++l) {
      cache.acts[l].resize(std::size_t(batch) * layers_[l]->out_shape().numel());
      cache.aux[l].resize(std::size_t(batch) * layers_[l]->aux_per_sample());
    }
    const int nt = worker_threads();
    std::vector<SampleScratch> scratch(nt);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      SampleScratch& s = scratch[this_thread_index()];
      const float* in = x + std::size_t(b) * input_.numel();
      for (std::size_t l = 0; l < L; ++l) {
        float* out = cache.acts[l].data() + std::size_t(b) * layers_[l]->out_shape().numel();
        std::int32_t* aux =
            layers_[l]->aux_per_sample()
                ? cache.aux[l].data() + std::size_t(b) * layers_[l]->aux_per_sample()
                : nullptr;
        layers_[l]->forward1(in, out, aux, s);
        in = out;
      }
    }
  }

  /// Logits for a batch (batch x num_classes).
  std::vector<float> logits(const float* x, int batch) const {
    BatchCache cache;
    forward(x, batch, cache);
    return std::move(cache.acts.back());
  }

  /// Backward from dlogits. Fills dx (batch x input numel) when non-null;
  /// fills param_grads (per layer, reduced over samples in ascending order)
  /// when non-null.
  void backward(const float* x, const BatchCache& cache, const float* dlogits, float* dx,
                std::vector<std::vector<float>>* param_grads) const {
    const int batch = cache.batch;
    const std::size_t L = layers_.size();
    // Per-sample parameter-gradient contributions, reduced after the loop so
    // the sum order never depends on thread count.
    std::vector<std::vector<float>> contrib(L);
    if (param_grads)
      for (std::size_t l = 0; l < L; ++l)
        contrib[l].assign(std::size_t(batch) * layers_[l]->param_count(), 0.0f);

    std::size_t max_in = 0;
    for (std::size_t l = 0; l < L; ++l) max_in = std::max(max_in, layers_[l]->in_shape().numel());

    const int nt = worker_threads();
    std::vector<SampleScratch> scratch(nt);
    std::vector<std::vector<float>> grad_buf(nt, std::vector<float>(2 * max_in));
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      SampleScratch& s = scratch[this_thread_index()];
      float* da = grad_buf[this_thread_index()].data();
      float* db = da + max_in;

      float* cur = da;
      std::memcpy(cur, dlogits + std::size_t(b) * num_classes_, sizeof(float) * num_classes_);
      for (std::size_t l = L; l-- > 0;) {
        const float* in =
            l == 0 ? x + std::size_t(b) * input_.numel()
                   : cache.acts[l - 1].data() +
                         std::size_t(b) * layers_[l - 1]->out_shape().numel();
        const float* out = cache.acts[l].data() + std::size_t(b) * layers_[l]->out_shape().numel();
        const std::int32_t* aux =
            layers_[l]->aux_per_sample()
                ? cache.aux[l].data() + std::size_t(b) * layers_[l]->aux_per_sample()
                : nullptr;
        float* dparams = nullptr;
        if (param_grads && layers_[l]->param_count())
          dparams = contrib[l].data() + std::size_t(b) * layers_[l]->param_count();
        const bool need_dx = (l > 0) || (dx != nullptr);
        float* dst = nullptr;
        if (need_dx)
          dst = (l == 0 && dx) ? dx + std::size_t(b) * input_.numel() : (cur == da ? db : da);
        layers_[l]->backward1(in, out, cur, dst, aux, s, dparams);
        cur = dst;
      }
    }

    if (param_grads) {
      param_grads->resize(L);
      for (std::size_t l = 0; l < L; ++l) {
        auto& g = (*param_grads)[l];
        const std::size_t pc = layers_[l]->param_count();
        g.assign(pc, 0.0f);
        for (int b = 0; b < batch; ++b) {
          const float* src = contrib[l].data() + std::size_t(b) * pc;
          for (std::size_t i = 0; i < pc; ++i) g[i] += src[i];
        }
      }
    }
  }

 private:
  void build() {
    Shape3 s = input_;
    auto add = [&](std::unique_ptr<Layer> l) {
      s = l->out_shape();
      layers_.push_back(std::move(l));
    };
    if (arch_ == "toy") {
      add(std::make_unique<Conv3x3>(s, 4));
      add(std::make_unique<Relu>(s));
      feature_layer_ = 1;
      add(std::make_unique<Linear>(s, num_classes_));
    } else if (arch_ == "compact") {
      add(std::make_unique<Conv3x3>(s, 16));
      add(std::make_unique<Relu>(s));
      feature_layer_ = 1;
      add(std::make_unique<MaxPool2>(s));
      add(std::make_unique<Conv3x3>(s, 32));
      add(std::make_unique<Relu>(s));
      add(std::make_unique<MaxPool2>(s));
      add(std::make_unique<Linear>(s, num_classes_));
    } else if (arch_ == "resnet_small") {
      add(std::make_unique<Conv3x3>(s, 16));
      add(std::make_unique<Relu>(s));
      feature_layer_ = 1;
      add(std::make_unique<ResidualBlock>(s));
      add(std::make_unique<MaxPool2>(s));
      add(std::make_unique<Conv3x3>(s, 32));
      add(std::make_unique<Relu>(s));
      add(std::make_unique<ResidualBlock>(s));
      add(std::make_unique<MaxPool2>(s));
      add(std::make_unique<Linear>(s, num_classes_));
    } else {
      throw ValidationError("unknown architecture '" + arch_ + "'");
    }
  }

  std::string arch_;
  Shape3 input_;
  int num_classes_;
  std::size_t feature_layer_ = 0;
  std::vector<std::unique_ptr<Layer>> layers_;
};

inline std::vector<std::string> known_architectures() { return {"toy", "compact", "resnet_small"}; }

// ---------------------------------------------------------------------------
// Softmax cross-entropy head.

/// Per-sample cross-entropy losses; optionally fills dlogits with
/// grad_scale * (softmax - onehot) per sample. Returns the batch mean loss.
/// Accumulation runs in double, ascending sample order.
inline double softmax_cross_entropy(const float* logits, const int* labels, int batch,
                                    int num_classes, double* per_sample, float* dlogits,
                                    float grad_scale) {
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const float* z = logits + std::size_t(b) * num_classes;
    if (labels[b] < 0 || labels[b] >= num_classes)
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(labels[b]) +
                            " outside [0," + std::to_string(num_classes) + ")");
    double zmax = z[0];
    for (int c = 1; c < num_classes; ++c) zmax = std::max(zmax, double(z[c]));
    double denom = 0.0;
    for (int c = 0; c < num_classes; ++c) denom += std::exp(double(z[c]) - zmax);
    const double logden = std::log(denom);
    const double loss = -(double(z[labels[b]]) - zmax - logden);
    if (per_sample) per_sample[b] = loss;
    total += loss;
    if (dlogits) {
      float* d = dlogits + std::size_t(b) * num_classes;
      for (int c = 0; c < num_classes; ++c) {
        const double p = std::exp(double(z[c]) - zmax - logden);
        d[c] = grad_scale * static_cast<float>(p - (c == labels[b] ? 1.0 : 0.0));
      }
    }
  }
  return batch > 0 ? total / batch : 0.0;
}

}  // namespace dualshift

#endif  // DUALSHIFT_NN_HPP

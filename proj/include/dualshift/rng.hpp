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

// Self-contained deterministic RNG. The standard <random> distributions and
// std::shuffle are implementation-defined, so every stochastic component in
// this library draws from these generators instead; a seed reproduces the
// same bytes on every platform.

#ifndef DUALSHIFT_RNG_HPP
#define DUALSHIFT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace dualshift {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Master-seed fan-out. Independent streams are addressed by a (stream,
// counter) pair; the scheme is derive(master, stream, counter) =
// splitmix64(splitmix64(master ^ golden*(stream+1)) ^ golden*(counter+1)).
// Distinct (stream, counter) pairs give statistically independent seeds and
// the mapping is stable across releases (generation records depend on it).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t counter = 0) {
  constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t x = splitmix64(master ^ (kGolden * (stream + 1)));
  return splitmix64(x ^ (kGolden * (counter + 1)));
}

// Stream ids used by the pipeline. Kept in one place so a generation record
// can name the stream that produced any random draw.
namespace seed_stream {
constexpr std::uint64_t kWeightInit = 1;
constexpr std::uint64_t kBatchShuffle = 2;
constexpr std::uint64_t kColorSubsample = 3;
constexpr std::uint64_t kPsoInit = 4;
constexpr std::uint64_t kPsoVelocity = 5;
constexpr std::uint64_t kAdversarialNoise = 6;
constexpr std::uint64_t kChannelShift = 7;
constexpr std::uint64_t kGalleryMember = 8;
constexpr std::uint64_t kSynthesis = 9;
constexpr std::uint64_t kDefense = 10;
}  // namespace seed_stream

/// PCG32 (Melissa O'Neill's pcg32_oneseq) with explicit float helpers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    state_ = 0;
    next_u32();
    state_ += seed;
    next_u32();
    have_gauss_ = false;
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + 1442695040888963407ULL;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform in [0, 1) with 24 bits of resolution.
  double uniform() { return static_cast<double>(next_u32() >> 8) * 0x1.0p-24; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) without modulo bias (fixed-point multiply).
  std::uint32_t uniform_int(std::uint32_t n) {
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u32()) * n) >> 32);
  }

  /// Standard normal via Box-Muller; caches the second deviate.
  double gaussian() {
    if (have_gauss_) {
      have_gauss_ = false;
      return cached_gauss_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    cached_gauss_ = r * std::sin(theta);
    have_gauss_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  /// Fisher-Yates; deterministic for a given seed on every platform.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_ = 0;
  bool have_gauss_ = false;
  double cached_gauss_ = 0.0;
};

}  // namespace dualshift

#endif  // DUALSHIFT_RNG_HPP

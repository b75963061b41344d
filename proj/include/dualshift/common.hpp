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

#ifndef DUALSHIFT_COMMON_HPP
#define DUALSHIFT_COMMON_HPP

#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dualshift {

/// Bad arguments, broken invariants, malformed datasets.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Filesystem / codec failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad run configuration (unknown keys, unknown backends, schema violations).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged (non-finite loss). Carries the offending epoch.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch_index)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch_index) + ")"),
        epoch(epoch_index) {}
  int epoch;
};

/// An optimizer hit a non-finite value. Carries the offending iteration.
class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(const std::string& what, int iteration_index)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration_index) + ")"),
        iteration(iteration_index) {}
  int iteration;
};

/// Caps the worker pool for all parallel loops. 0 restores the default
/// (hardware concurrency). Results are bit-identical for every setting:
/// parallelism is across independent samples and all cross-sample
/// reductions run in ascending sample order.
inline void set_worker_threads(int n) {
#ifdef _OPENMP
  if (n > 0) {
    omp_set_num_threads(n);
  } else {
    omp_set_num_threads(omp_get_num_procs());
  }
#else
  (void)n;
#endif
}

inline int worker_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline int this_thread_index() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

}  // namespace dualshift

#endif  // DUALSHIFT_COMMON_HPP

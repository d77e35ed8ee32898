// Copyright 2026 adherelm contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace adherelm {

/// Seeded random stream with samplers whose output depends only on the
/// mt19937_64 bit stream. The standard <random> distributions are
/// implementation-defined, so simulation outputs would not be stable across
/// standard libraries; these samplers are, which is what the byte-identical
/// rerun contract needs.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Independent per-unit stream derived from a master seed, so a parallel
  /// map over units reproduces the sequential run exactly.
  static RngStream substream(std::uint64_t master_seed, std::uint64_t index);

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform integer in [0, n); unbiased via masked rejection.
  std::uint64_t below(std::uint64_t n);

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

  bool bernoulli(double p);

  /// Box-Muller normal.
  double normal(double mean, double sd);

  double exponential(double rate);

  /// Index sampled proportionally to non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  /// Flat Dirichlet draw over out.size() cells (normalized exponentials).
  void dirichlet_flat(std::span<double> out);

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace adherelm

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

#include "adherelm/rng.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace adherelm {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

RngStream RngStream::substream(std::uint64_t master_seed, std::uint64_t index) {
  return RngStream(splitmix64(master_seed) ^ splitmix64(index + 1));
}

double RngStream::uniform() {
  // 53 random bits into [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n must be > 0");
  const std::uint64_t mask = std::bit_ceil(n) - 1;
  std::uint64_t v;
  do {
    v = engine_() & mask;
  } while (v >= n);
  return v;
}

int RngStream::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("RngStream::uniform_int: hi < lo");
  return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

double RngStream::normal(double mean, double sd) {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * r * std::cos(2.0 * M_PI * u2);
}

double RngStream::exponential(double rate) {
  if (rate <= 0.0) throw std::invalid_argument("RngStream::exponential: rate must be > 0");
  return -std::log1p(-uniform()) / rate;
}

std::size_t RngStream::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (const double w : weights) {
    if (w < 0.0 || !std::isfinite(w))
      throw std::invalid_argument("RngStream::categorical: weights must be finite and >= 0");
    total += w;
  }
  if (total <= 0.0)
    throw std::invalid_argument("RngStream::categorical: weights sum to zero");
  double target = uniform() * total;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    target -= weights[i];
    if (target < 0.0) return i;
  }
  return weights.size() - 1;
}

void RngStream::dirichlet_flat(std::span<double> out) {
  double total = 0.0;
  for (double& v : out) {
    v = exponential(1.0);
    total += v;
  }
  for (double& v : out) v /= total;
}

}  // namespace adherelm

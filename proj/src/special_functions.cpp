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

#include "adherelm/special_functions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace adherelm {

namespace {

constexpr int kMaxIterations = 500;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;

// Lower regularized gamma P(s, x) via its power series; use for x < s + 1.
double gamma_p_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  double a = s;
  for (int n = 0; n < kMaxIterations; ++n) {
    a += 1.0;
    term *= x / a;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Upper regularized gamma Q(s, x) via the Lentz continued fraction; use for
// x >= s + 1.
double gamma_q_continued_fraction(double s, double x) {
  double b = x + 1.0 - s;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int n = 1; n <= kMaxIterations; ++n) {
    const double an = -n * (n - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

}  // namespace

double regularized_gamma_upper(double s, double x) {
  if (s <= 0.0 || x < 0.0)
    throw std::invalid_argument("regularized_gamma_upper: domain s > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (x < s + 1.0) return 1.0 - gamma_p_series(s, x);
  return gamma_q_continued_fraction(s, x);
}

double chi_square_upper_tail(double x, double df) {
  if (df <= 0.0) throw std::invalid_argument("chi_square_upper_tail: df must be > 0");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_upper(0.5 * df, 0.5 * x);
}

}  // namespace adherelm

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

namespace adherelm {

/// Regularized upper incomplete gamma Q(s, x) = Gamma(s, x) / Gamma(s),
/// evaluated by the power series below x = s + 1 and by a Lentz continued
/// fraction above it. Relative accuracy around 1e-14 in the ranges used by
/// the chi-square tail.
double regularized_gamma_upper(double s, double x);

/// P(X >= x) for a chi-square variable with df degrees of freedom.
double chi_square_upper_tail(double x, double df);

}  // namespace adherelm

// Copyright 2026 The spinmem Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>

#include "spinmem/units.hpp"

// Weights for integrating exp(-s u) against the two hat-function halves on
// one step, expressed through z = s dt:
//   int_0^1 exp(-z v) (1 - v) dv = psi1(z)
//   int_0^1 exp(-z v) v dv       = psi2(z)
// Both have removable singularities at z = 0; small |z| uses the series.

namespace spinmem::detail {

inline cplx psi1(cplx z) {
  if (std::abs(z) < 0.5) {
    // sum_n (-z)^n / (n+2)!
    cplx term = 0.5;
    cplx sum = term;
    for (int n = 1; n < 30; ++n) {
      term *= -z / static_cast<double>(n + 2);
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return (z - 1.0 + std::exp(-z)) / (z * z);
}

inline cplx psi2(cplx z) {
  if (std::abs(z) < 0.5) {
    // sum_n (-z)^n / (n! (n+2))
    cplx fact = 1.0;
    cplx sum = 0.5;
    for (int n = 1; n < 30; ++n) {
      fact *= -z / static_cast<double>(n);
      const cplx term = fact / static_cast<double>(n + 2);
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return (1.0 - std::exp(-z) * (1.0 + z)) / (z * z);
}

/// (exp(w) - 1) / w, accurate near w = 0.
inline cplx expm1_over(cplx w) {
  if (std::abs(w) < 0.5) {
    cplx term = 1.0;
    cplx sum = 1.0;
    for (int n = 2; n < 30; ++n) {
      term *= w / static_cast<double>(n);
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return (std::exp(w) - 1.0) / w;
}

/// Below this |s_w - s_c| (rad/ns) a frequency point takes the per-lag path.
inline constexpr double kDegenerateGap = 1e-4;

}  // namespace spinmem::detail

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

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "spinmem/basis.hpp"
#include "spinmem/coeff_table.hpp"
#include "spinmem/units.hpp"

namespace spinmem {

struct Superposition {
  cplx alpha{1.0, 0.0};
  cplx beta{0.0, 0.0};
};

/// Rebit family alpha = 1 - x + s i sqrt(x(1-x)), beta = x - s i sqrt(x(1-x))
/// with s = +1 (upper branch) or -1 (lower branch).
Superposition rebit_params(double x, int branch = +1);

/// Qubit angles: alpha = cos(theta/2), beta = sin(theta/2) exp(i phi).
Superposition qubit_params(double theta, double phi);

/// Write coefficients alpha xi0 + beta xi1.
std::vector<cplx> encode(const Superposition& sup, const ControlCoefficients& c);

/// Retrieval system O_i = alpha F(i,0) + beta F(i,1) + f_r(i), i = 0, 1.
struct RetrievalMatrices {
  Eigen::Matrix2cd f;
  Eigen::Vector2cd f_r;
  double cond = 0.0;  ///< 2-norm condition number of f
};

/// Gram route: the references are A_i = Y [xi_i; zeta] on [tau_a, tau_c].
RetrievalMatrices retrieval_matrices(const GramMatrices& gram, const ControlCoefficients& c);

/// Direct route from sampled readout-section trajectories on [begin, end].
RetrievalMatrices retrieval_matrices(std::span<const cplx> stored0, std::span<const cplx> stored1,
                                     std::span<const cplx> readout_only, double dt,
                                     std::size_t begin, std::size_t end);

/// O_i = int A conj(A_i) dt over [begin, end] by the trapezoidal rule.
std::pair<cplx, cplx> overlaps(std::span<const cplx> response, std::span<const cplx> ref0,
                               std::span<const cplx> ref1, double dt, std::size_t begin,
                               std::size_t end);

/// Gram route for a response with stacked coefficients v = [xi; zeta].
std::pair<cplx, cplx> overlaps(const GramMatrices& gram, const ControlCoefficients& c,
                               const Eigen::VectorXcd& v);

struct RetrievalResult {
  cplx alpha_r;
  cplx beta_r;
  cplx o0;
  cplx o1;
  double eps_alpha = 0.0;  ///< |alpha - alpha_r| when the input is known, else NaN
  double eps_beta = 0.0;
  double cond = 0.0;
  bool ill_conditioned = false;  ///< cond(f) >= 1e8
};

/// Solves the 2x2 system. Throws RetrievalDegeneracyError when f is
/// numerically singular.
RetrievalResult retrieve(std::pair<cplx, cplx> o, const RetrievalMatrices& mats);
RetrievalResult retrieve(std::pair<cplx, cplx> o, const RetrievalMatrices& mats,
                         const Superposition& known);

/// (r_x, r_y, r_z) = (2 Re(a* b), 2 Im(a* b), |a|^2 - |b|^2).
std::array<double, 3> bloch_vector(const Superposition& sup);

}  // namespace spinmem

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

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "spinmem/kernel.hpp"
#include "spinmem/model.hpp"
#include "spinmem/solver.hpp"
#include "spinmem/units.hpp"

namespace spinmem {

/// Sine-series drive eta(t) = sum_k coeffs[k] sin((k+1) omega_f (t - section_start))
/// on [section_start, section_end]; zero elsewhere. Coefficients are in
/// absolute drive units; amp_scale is the unit used by normalized tables.
struct Pulse {
  std::vector<cplx> coeffs;
  double omega_f = 0.0;
  double section_start = 0.0;
  double section_end = 0.0;
  double amp_scale = 1.0;
};

cplx pulse_eval(const Pulse& pulse, double t);

/// pulse_eval at t0 + m dt for m = 0..count-1.
std::vector<cplx> sample_pulse(const Pulse& pulse, double t0, double dt, std::size_t count);

/// (1/2) sum_k |coeffs[k] / amp_scale|^2.
double pulse_power(const Pulse& pulse);

struct BasisSpec {
  std::size_t n1 = 5;  ///< write harmonics
  std::size_t n2 = 10;  ///< readout harmonics
  /// Fundamentals in rad/ns; zero selects pi / (section length) of the snapped layout.
  double omega_f_write = 0.0;
  double omega_f_read = 0.0;
};

/// Unit-coefficient responses. Rows are time samples: write rows cover
/// [T1, T2] (indices 0..i2), read and memory rows cover [T2, T3]
/// (indices i2..i3 shifted to start at 0).
struct BasisSet {
  GridLayout grid;
  BasisSpec spec;  ///< with resolved fundamentals
  Eigen::MatrixXcd write;   ///< a_k^(W)
  Eigen::MatrixXcd read;    ///< a_l^(R)
  Eigen::MatrixXcd memory;  ///< psi_k^(R): readout response of the stored write response

  std::size_t n1() const { return static_cast<std::size_t>(write.cols()); }
  std::size_t n2() const { return static_cast<std::size_t>(read.cols()); }
  Pulse write_pulse(std::span<const cplx> xi) const;
  Pulse read_pulse(std::span<const cplx> zeta) const;
};

BasisSet build_basis(const GridLayout& grid, BasisSpec spec, const Ensemble& ens,
                     const KernelTable& kernel);

/// A^(W)(t) = sum_k xi_k a_k^(W)(t) on [T1, T2].
Trajectory assemble_write(std::span<const cplx> xi, const BasisSet& basis);

/// A^(R)(t) = sum_l zeta_l a_l^(R)(t) + sum_k xi_k psi_k^(R)(t) on [T2, T3].
Trajectory assemble_read(std::span<const cplx> zeta, std::span<const cplx> xi,
                         const BasisSet& basis);

/// Stacked coefficient vector [xi; zeta] matching the Gram column order.
Eigen::VectorXcd stack_coefficients(std::span<const cplx> xi, std::span<const cplx> zeta);

/// Overlap matrices G(i, j) = int conj(y_i) y_j dt over the readout-section
/// basis y = [psi_1..psi_N1, a_1..a_N2], so int |Y v|^2 = v^H G v. Integrals
/// use the trapezoidal rule on the solver grid.
struct GramMatrices {
  Eigen::MatrixXcd delay;    ///< [T2, tau_a]
  Eigen::MatrixXcd bin0;     ///< [tau_a, tau_b]
  Eigen::MatrixXcd bin1;     ///< [tau_b, tau_c]
  Eigen::MatrixXcd readout;  ///< [tau_a, tau_c]
  Eigen::MatrixXcd write;    ///< [T1, T2] over a^(W)
  Eigen::RowVectorXcd endpoint;  ///< y_j(tau_a)
  double delay_length = 0.0;     ///< tau_a - T2, ns
  double readout_length = 0.0;   ///< tau_c - tau_a, ns
};

GramMatrices gram(const BasisSet& basis);

/// Trapezoidal int x(t) conj(y(t)) dt over samples [begin, end].
cplx overlap_integral(std::span<const cplx> x, std::span<const cplx> y, double dt,
                      std::size_t begin, std::size_t end);

}  // namespace spinmem

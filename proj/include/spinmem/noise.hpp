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
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "spinmem/basis.hpp"
#include "spinmem/coeff_table.hpp"
#include "spinmem/kernel.hpp"
#include "spinmem/retrieval.hpp"
#include "spinmem/solver.hpp"

// White-noise perturbation of the drive. After every integration step the
// cavity sample is kicked, A(t_{m+1}) += sqrt(dt) * delta_eta * u_m, with u_m
// drawn from a counter-based stream keyed by (m, realization, point).

namespace spinmem {

enum class NoiseKind {
  complex_circular,  ///< independent quadratures, each of variance 1/2
  real_only,         ///< real standard normal
};

enum class NoiseWindow {
  all_sections,  ///< write, delay and readout
  write_only,
};

struct NoiseSpec {
  double delta_eta = 0.0;  ///< drive units (amplitude / sqrt(ns))
  std::size_t n_realizations = 200;
  std::uint64_t seed = 1;
  NoiseKind kind = NoiseKind::complex_circular;
  NoiseWindow window = NoiseWindow::all_sections;
};

/// Throws ConfigError on a negative amplitude or zero realizations.
void validate(const NoiseSpec& spec);

/// u_{m-1} at sample m for m in [1, last]; zero elsewhere. Independent of
/// delta_eta, so amplitude sweeps share their random numbers.
std::vector<cplx> unit_noise(const NoiseSpec& spec, std::size_t n_samples, std::size_t last,
                             std::uint32_t realization, std::uint32_t point);

/// Write and readout drives of the protocol on the basis grid.
std::vector<SectionDrive> protocol_sections(const BasisSet& basis, std::span<const cplx> xi,
                                            std::span<const cplx> zeta);

/// Last sample that receives noise under the window setting.
std::size_t noise_window_end(const GridLayout& grid, NoiseWindow window);

/// End-to-end noisy solve through the section solver. delta_eta = 0
/// reproduces the deterministic trajectory bit for bit.
Trajectory solve_noisy(const Ensemble& ens, const KernelTable& kernel,
                       std::span<const SectionDrive> sections, std::size_t window_end,
                       const NoiseSpec& spec, std::uint32_t realization, std::uint32_t point = 0);

struct NoiseStudyResult {
  cplx mean_alpha;
  cplx mean_beta;
  double eps_alpha = 0.0;  ///< |alpha - <alpha_R>|
  double eps_beta = 0.0;
  double std_err_alpha = 0.0;  ///< standard error of <alpha_R>
  double std_err_beta = 0.0;
  std::vector<std::array<cplx, 2>> samples;  ///< per realization, when requested
};

/// Monte-Carlo retrieval for one control solution. The dynamics are linear,
/// so the noise enters the overlaps through the response to a single kick;
/// each realization then costs one pass over its random numbers.
class NoiseHarness {
 public:
  NoiseHarness(const Ensemble& ens, const KernelTable& kernel, const BasisSet& basis,
               const ControlCoefficients& coeffs);

  const RetrievalMatrices& matrices() const { return mats_; }
  const BasisSet& basis() const { return *basis_; }
  const ControlCoefficients& coefficients() const { return coeffs_; }

  /// Noiseless retrieval of the encoded superposition.
  RetrievalResult noiseless(const Superposition& sup) const;

  NoiseStudyResult run(const Superposition& sup, const NoiseSpec& spec, std::uint32_t point = 0,
                       bool keep_samples = false) const;

  /// Retrieval shift (d alpha, d beta) of one realization at delta_eta = 1.
  std::array<cplx, 2> unit_shift(const NoiseSpec& spec, std::uint32_t realization,
                                 std::uint32_t point) const;

 private:
  const BasisSet* basis_;
  ControlCoefficients coeffs_;
  GramMatrices gram_;
  RetrievalMatrices mats_;
  double dt_ = 0.0;
  std::size_t n_samples_ = 0;
  std::size_t window_end_[2] = {0, 0};
  /// Retrieval shift per unit kick at each sample, rows alpha and beta.
  std::vector<cplx> gain_[2];
};

/// Reference path: every realization is a full noisy solve followed by
/// quadrature overlaps. Quadratic in the grid size; meant for validation.
NoiseStudyResult monte_carlo_direct(const Ensemble& ens, const KernelTable& kernel,
                                    const BasisSet& basis, const ControlCoefficients& coeffs,
                                    const Superposition& sup, const NoiseSpec& spec,
                                    std::uint32_t point = 0);

struct SweepPoint {
  double theta = 0.0;
  double phi = 0.0;
  Superposition input;
  NoiseStudyResult result;
  std::array<double, 3> bloch{};  ///< of the averaged retrieved amplitudes
};

/// (theta, phi) grid with theta in [0, pi] and phi in [0, 2 pi], both ends
/// included; point index = i_theta * n_phi + i_phi.
std::vector<SweepPoint> qubit_sweep(const NoiseHarness& harness, const NoiseSpec& spec,
                                    std::size_t n_theta = 21, std::size_t n_phi = 41);

double max_error(std::span<const SweepPoint> points);

struct AmplitudeSweep {
  std::vector<double> delta_eta;
  std::vector<double> max_eps;  ///< max over the grid of max(eps_alpha, eps_beta)
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Maximum retrieval error over the qubit grid for each amplitude, with a
/// least-squares line through the results. All amplitudes share the same
/// random numbers.
AmplitudeSweep amplitude_sweep(const NoiseHarness& harness, const NoiseSpec& spec,
                               std::span<const double> delta_etas, std::size_t n_theta = 21,
                               std::size_t n_phi = 41);

/// theta,phi,re_alpha_in,im_alpha_in,re_beta_in,im_beta_in,re_alpha_r,im_alpha_r,
/// re_beta_r,im_beta_r,eps_alpha,eps_beta,r_x,r_y,r_z
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);

/// delta_eta,max_eps plus a trailing fit comment.
void write_amplitude_csv(std::ostream& out, const AmplitudeSweep& sweep);

}  // namespace spinmem

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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spinmem/kernel.hpp"
#include "spinmem/model.hpp"
#include "spinmem/units.hpp"

namespace spinmem {

/// Cavity amplitude on the uniform grid t_m = t0 + m dt.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<cplx> samples;

  std::size_t size() const { return samples.size(); }
  double time(std::size_t m) const { return t0 + static_cast<double>(m) * dt; }
};

/// Solves A_m = int_{t_0}^{t_m} K(t_m - tau) A(tau) dtau + drive_m + memory_m
/// with A piecewise linear between samples. Either forcing may be empty.
/// Throws NumericalInstabilityError on a non-finite sample.
Trajectory solve_volterra(const KernelTable& kernel, std::span<const cplx> drive,
                          std::span<const cplx> memory, double t0 = 0.0);

/// Same equation for every column of `forcing` (rows are time samples).
/// Columns are processed in fixed groups, so results do not depend on the
/// thread count.
Eigen::MatrixXcd solve_volterra_batch(const KernelTable& kernel,
                                      const Eigen::MatrixXcd& forcing);

/// Explicit spin ensemble for the ODE cross-check:
/// dA/dt = -(kappa + i Delta_c) A + sum_k g_k B_k - eta,
/// dB_k/dt = -(gamma + i Delta_k) B_k - g_k A.
struct SpinStateVector {
  std::vector<double> omega;      ///< spin frequencies, rad/ns
  std::vector<double> couplings;  ///< g_k = Omega sqrt(rho_k w_k)
  std::vector<cplx> amplitudes;   ///< B_k

  /// Zero-amplitude ensemble on a Gauss-Legendre discretization of the density.
  static SpinStateVector from_density(const SystemParams& params, const SpinDensity& density,
                                      std::size_t n_points = 4000);
  std::size_t size() const { return omega.size(); }
};

struct OdeSolution {
  Trajectory trajectory;
  /// sum_k |B_k|^2 at every sample.
  std::vector<double> spin_energy;
};

/// Classic RK4 on the grid t0 + m dt, m = 0..n_steps, with `substeps` RK4
/// steps per sample. A doubled-step run is compared against the result and
/// a NumericalInstabilityError suggests refinement when they disagree by
/// more than `check_tol` relative to the peak amplitude.
OdeSolution solve_ode_reference(const SystemParams& params, const SpinStateVector& spins,
                                const std::function<cplx(double)>& eta, cplx a0, double t0,
                                double dt, std::size_t n_steps, int substeps = 1,
                                double check_tol = 1e-3);

/// Drive samples for one section on the global grid, indices begin..end
/// inclusive, so consecutive sections share their boundary sample.
struct SectionDrive {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<cplx> eta;
};

struct SegmentedTrajectory {
  Trajectory full;
  /// Global start index of every section plus the final index.
  std::vector<std::size_t> boundaries;
  /// History handed into each section (entry 0 is empty).
  std::vector<MemoryState> memories;
};

/// Solves section by section, handing the memory across each boundary.
/// Optional kicks (one per global sample) are added to A at their sample and
/// then evolve with the coupled dynamics.
SegmentedTrajectory propagate_sections(const Ensemble& ens, const KernelTable& kernel,
                                       double t0, std::span<const SectionDrive> sections,
                                       std::span<const cplx> kicks = {});

/// CSV with header t_ns,re_A,im_A,abs2_A and 17 significant digits.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace spinmem

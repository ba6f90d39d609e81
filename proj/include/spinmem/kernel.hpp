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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spinmem/model.hpp"
#include "spinmem/units.hpp"

// Memory kernel, driving term and inter-section memory of the cavity
// amplitude equation
//
//   A(t) = int_{T_n}^t K(t - tau) A(tau) dtau + D(t) + F(t),
//
//   K(x) = Omega^2 int rho(w) G_w(x) dw,
//   G_w(x) = (exp(-s_w x) - exp(-s_c x)) / (s_w - s_c),
//   s_w = gamma + i (w - omega_p),  s_c = kappa + i Delta_c.
//
// Every time integral treats the sampled functions as piecewise linear
// between grid points and integrates the exponentials exactly, so section
// boundaries never change the discrete solution.

namespace spinmem {

/// Frequency quadrature of the spin ensemble together with the system
/// constants: mass[k] = weights[k] * rho(points[k]).
struct Ensemble {
  SystemParams params;
  FrequencyGrid grid;
  std::vector<double> mass;

  static Ensemble make(const SystemParams& params, const SpinDensity& density,
                       FrequencyGrid grid);
  std::size_t size() const { return mass.size(); }
};

/// Lag-indexed kernel data on a uniform grid, m = 0..M.
struct KernelTable {
  double dt = 0.0;
  /// K(m dt); values[0] == 0.
  std::vector<cplx> values;
  /// int_0^dt K(m dt + u) (1 - u/dt) du.
  std::vector<cplx> right_half;
  /// int_0^dt K(m dt - u) (1 - u/dt) du; entry 0 is unused and zero.
  std::vector<cplx> left_half;

  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }
};

/// Tabulate the kernel for lags 0..ceil(horizon/dt).
KernelTable kernel_table(const Ensemble& ens, double dt, double horizon);

/// Same as kernel_table, but reuses a binary cache file under cache_dir keyed
/// by a content hash of the inputs.
KernelTable kernel_table_cached(const Ensemble& ens, double dt, double horizon,
                                const std::filesystem::path& cache_dir);

/// Binary cache I/O (magic + version header); load returns nullopt on any
/// mismatch.
void save_kernel_table(const KernelTable& table, std::uint64_t key,
                       const std::filesystem::path& file);
std::optional<KernelTable> load_kernel_table(std::uint64_t key,
                                             const std::filesystem::path& file);
std::uint64_t kernel_cache_key(const Ensemble& ens, double dt, std::size_t steps);

/// Pointwise kernel value, evaluated directly from the frequency sum.
cplx kernel_value(const Ensemble& ens, double lag);

/// D(t_m) = -int_{t_0}^{t_m} eta(tau) exp(-s_c (t_m - tau)) dtau with eta
/// piecewise linear through the samples; D(t_0) = 0.
std::vector<cplx> driving_term(const SystemParams& params, std::span<const cplx> eta, double dt);

/// Free cavity propagation of impulsive kicks: N_m = exp(-s_c dt) N_{m-1} + kicks[m].
std::vector<cplx> impulse_term(const SystemParams& params, std::span<const cplx> kicks, double dt);

/// History carried into a section: A^(n-1)(T_n) and I^(n)(omega_k).
struct MemoryState {
  cplx boundary_amp{0.0, 0.0};
  std::vector<cplx> memory_integral;

  /// Initial condition of the first section: everything zero.
  static MemoryState empty(std::size_t n_freq);
};

/// I^(n)(w) = I^(n-1)(w) exp(-s_w (T_n - T_{n-1}))
///          + int_{T_{n-1}}^{T_n} A(tau) exp(-s_w (T_n - tau)) dtau,
/// with prev_samples covering [T_{n-1}, T_n].
MemoryState memory_handoff(const MemoryState& prev, std::span<const cplx> prev_samples,
                           double dt, const Ensemble& ens);

/// Batched handoff for several independent histories; samples[s] belongs to prev[s].
std::vector<MemoryState> memory_handoff(std::span<const MemoryState> prev,
                                        std::span<const std::vector<cplx>> samples, double dt,
                                        const Ensemble& ens);

/// F(t_rel) = A_b exp(-s_c t_rel) + Omega^2 sum_k mass_k G_k(t_rel) I_k at
/// t_rel = m dt, m = 0..count-1.
std::vector<cplx> memory_term(const MemoryState& state, const Ensemble& ens, double dt,
                              std::size_t count);

/// Batched memory_term.
std::vector<std::vector<cplx>> memory_term(std::span<const MemoryState> states,
                                           const Ensemble& ens, double dt, std::size_t count);

/// G(x) for s_w = s, evaluated in a form that stays accurate as s -> s_c.
cplx kernel_mode(cplx s, cplx s_c, double x);

}  // namespace spinmem

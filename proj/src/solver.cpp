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

#include "spinmem/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

constexpr Eigen::Index kRowBlock = 128;
constexpr Eigen::Index kHistoryChunk = 1024;

bool finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

[[noreturn]] void blow_up(std::size_t step) {
  throw NumericalInstabilityError("Volterra solve produced a non-finite amplitude at step " +
                                  std::to_string(step));
}

// Combined hat weight of an interior sample at lag L >= 1.
cplx hat_weight(const KernelTable& k, std::size_t lag) {
  return k.left_half[lag] + k.right_half[lag];
}

void check_length(const KernelTable& kernel, std::size_t n) {
  if (n > 0 && n - 1 > kernel.steps()) {
    throw ConfigError("kernel table covers " + std::to_string(kernel.steps()) +
                      " steps but the section needs " + std::to_string(n - 1));
  }
}

}  // namespace

Trajectory solve_volterra(const KernelTable& kernel, std::span<const cplx> drive,
                          std::span<const cplx> memory, double t0) {
  const std::size_t n = std::max(drive.size(), memory.size());
  if ((!drive.empty() && drive.size() != n) || (!memory.empty() && memory.size() != n)) {
    throw ConfigError("solve_volterra: drive and memory samples differ in length");
  }
  check_length(kernel, n);
  Trajectory out{t0, kernel.dt, std::vector<cplx>(n)};
  if (n == 0) return out;

  // Reversed combined weights so the history sum runs over contiguous memory:
  // H[m - j] == h[n - 1 - m + j].
  std::vector<double> hr(n, 0.0), hi(n, 0.0), ar(n, 0.0), ai(n, 0.0);
  for (std::size_t lag = 1; lag < n; ++lag) {
    const cplx h = hat_weight(kernel, lag);
    hr[n - 1 - lag] = h.real();
    hi[n - 1 - lag] = h.imag();
  }
  const cplx inv = 1.0 / (1.0 - kernel.right_half[0]);
  auto forcing = [&](std::size_t m) {
    cplx f = 0.0;
    if (!drive.empty()) f += drive[m];
    if (!memory.empty()) f += memory[m];
    return f;
  };

  const cplx a0 = forcing(0);
  if (!finite(a0)) blow_up(0);
  ar[0] = a0.real();
  ai[0] = a0.imag();
  for (std::size_t m = 1; m < n; ++m) {
    const double* __restrict h_r = hr.data() + (n - 1 - m);
    const double* __restrict h_i = hi.data() + (n - 1 - m);
    const double* __restrict x_r = ar.data();
    const double* __restrict x_i = ai.data();
    double sr = 0.0, si = 0.0;
#pragma omp simd reduction(+ : sr, si)
    for (std::size_t j = 1; j < m; ++j) {
      sr += h_r[j] * x_r[j] - h_i[j] * x_i[j];
      si += h_r[j] * x_i[j] + h_i[j] * x_r[j];
    }
    const cplx a = (forcing(m) + kernel.left_half[m] * a0 + cplx(sr, si)) * inv;
    if (!finite(a)) blow_up(m);
    ar[m] = a.real();
    ai[m] = a.imag();
  }
  for (std::size_t m = 0; m < n; ++m) out.samples[m] = {ar[m], ai[m]};
  return out;
}

Eigen::MatrixXcd solve_volterra_batch(const KernelTable& kernel,
                                      const Eigen::MatrixXcd& forcing) {
  const Eigen::Index n = forcing.rows();
  const Eigen::Index s = forcing.cols();
  check_length(kernel, static_cast<std::size_t>(n));
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, s);
  if (n == 0 || s == 0) return a;

  const cplx inv = 1.0 / (1.0 - kernel.right_half[0]);
  a.row(0) = forcing.row(0);
  Eigen::MatrixXcd acc, toeplitz;
  for (Eigen::Index r0 = 1; r0 < n; r0 += kRowBlock) {
    const Eigen::Index r1 = std::min(n, r0 + kRowBlock);
    const Eigen::Index rows = r1 - r0;
    acc = forcing.middleRows(r0, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      acc.row(i) += kernel.left_half[static_cast<std::size_t>(r0 + i)] * a.row(0);
    }
    // Completed history j in [1, r0) as a dense Toeplitz product.
    for (Eigen::Index c0 = 1; c0 < r0; c0 += kHistoryChunk) {
      const Eigen::Index c1 = std::min(r0, c0 + kHistoryChunk);
      toeplitz.resize(rows, c1 - c0);
      for (Eigen::Index jj = 0; jj < c1 - c0; ++jj) {
        for (Eigen::Index i = 0; i < rows; ++i) {
          toeplitz(i, jj) = hat_weight(kernel, static_cast<std::size_t>(r0 + i - (c0 + jj)));
        }
      }
      acc.noalias() += toeplitz * a.middleRows(c0, c1 - c0);
    }
    // Remaining lower triangle inside the block.
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::Index m = r0 + i;
      for (Eigen::Index j = r0; j < m; ++j) {
        acc.row(i) += hat_weight(kernel, static_cast<std::size_t>(m - j)) * a.row(j);
      }
      a.row(m) = acc.row(i) * inv;
    }
    if (!a.middleRows(r0, rows).allFinite()) {
      for (Eigen::Index m = r0; m < r1; ++m) {
        if (!a.row(m).allFinite()) blow_up(static_cast<std::size_t>(m));
      }
    }
  }
  return a;
}

SpinStateVector SpinStateVector::from_density(const SystemParams& params,
                                              const SpinDensity& density, std::size_t n_points) {
  const FrequencyGrid grid = discretize(density, n_points);
  SpinStateVector spins;
  spins.omega = grid.points;
  spins.couplings.resize(grid.size());
  spins.amplitudes.assign(grid.size(), 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    spins.couplings[k] =
        params.Omega * std::sqrt(grid.weights[k] * density_at(density, grid.points[k]));
  }
  return spins;
}

namespace {

struct OdeRun {
  std::vector<cplx> a;
  std::vector<double> spin_energy;
};

// RK4 with `per_sample` steps of size h between consecutive output samples.
OdeRun run_rk4(const SystemParams& params, const SpinStateVector& spins,
               const std::function<cplx(double)>& eta, cplx a0, double t0, double h,
               int per_sample, std::size_t n_out) {
  using Vec = Eigen::VectorXcd;
  const Eigen::Index nk = static_cast<Eigen::Index>(spins.size());
  Vec g(nk), rate(nk), b(nk);
  for (Eigen::Index k = 0; k < nk; ++k) {
    g(k) = spins.couplings[static_cast<std::size_t>(k)];
    rate(k) = cplx(params.gamma, spins.omega[static_cast<std::size_t>(k)] - params.omega_p);
    b(k) = spins.amplitudes[static_cast<std::size_t>(k)];
  }
  const cplx s_c(params.kappa, params.delta_c());
  const Vec gt = g;
  auto d_a = [&](double t, cplx a, const Vec& bb) { return -s_c * a + gt.dot(bb) - eta(t); };
  auto d_b = [&](cplx a, const Vec& bb) -> Vec { return -rate.cwiseProduct(bb) - a * g; };

  OdeRun run;
  run.a.resize(n_out);
  run.spin_energy.resize(n_out);
  cplx a = a0;
  run.a[0] = a;
  run.spin_energy[0] = b.squaredNorm();
  Vec k1b, k2b, k3b, k4b;
  for (std::size_t m = 1; m < n_out; ++m) {
    for (int sub = 0; sub < per_sample; ++sub) {
      const double t = t0 + (static_cast<double>(m - 1) * per_sample + sub) * h;
      // Eigen's dot conjugates its first argument; g is real so that is harmless.
      const cplx k1a = d_a(t, a, b);
      k1b = d_b(a, b);
      const cplx a2 = a + 0.5 * h * k1a;
      const Vec b2 = b + 0.5 * h * k1b;
      const cplx k2a = d_a(t + 0.5 * h, a2, b2);
      k2b = d_b(a2, b2);
      const cplx a3 = a + 0.5 * h * k2a;
      const Vec b3 = b + 0.5 * h * k2b;
      const cplx k3a = d_a(t + 0.5 * h, a3, b3);
      k3b = d_b(a3, b3);
      const cplx a4 = a + h * k3a;
      const Vec b4 = b + h * k3b;
      const cplx k4a = d_a(t + h, a4, b4);
      k4b = d_b(a4, b4);
      a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
      b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
    }
    run.a[m] = a;
    run.spin_energy[m] = b.squaredNorm();
  }
  return run;
}

}  // namespace

OdeSolution solve_ode_reference(const SystemParams& params, const SpinStateVector& spins,
                                const std::function<cplx(double)>& eta, cplx a0, double t0,
                                double dt, std::size_t n_steps, int substeps,
                                double check_tol) {
  if (!(dt > 0.0) || substeps < 1) throw ConfigError("ODE reference: need dt > 0, substeps >= 1");
  if (spins.couplings.size() != spins.size() || spins.amplitudes.size() != spins.size()) {
    throw ConfigError("ODE reference: inconsistent spin state vector");
  }
  const double h = dt / substeps;
  OdeRun fine = run_rk4(params, spins, eta, a0, t0, h, substeps, n_steps + 1);

  // Doubled step: 2h per RK4 step. With one substep that lands on every
  // other sample, otherwise on every sample.
  const bool odd = substeps % 2 != 0;
  const int coarse_per = odd ? 1 : substeps / 2;
  const std::size_t stride = odd ? 2 : 1;
  const std::size_t n_coarse = n_steps / stride + 1;
  OdeRun coarse = run_rk4(params, spins, eta, a0, t0, 2.0 * h, coarse_per, n_coarse);
  double peak = 0.0, diff = 0.0;
  for (std::size_t m = 0; m < fine.a.size(); ++m) peak = std::max(peak, std::abs(fine.a[m]));
  for (std::size_t c = 0; c < n_coarse; ++c) {
    diff = std::max(diff, std::abs(fine.a[c * stride] - coarse.a[c]));
  }
  if (!std::isfinite(peak) || !(diff <= check_tol * std::max(peak, 1e-300))) {
    if (peak == 0.0 && diff == 0.0) {
      // identically zero solution
    } else {
      throw NumericalInstabilityError(
          "ODE reference: doubled-step run disagrees by " + std::to_string(diff / peak) +
          " relative; increase substeps (currently " + std::to_string(substeps) + ")");
    }
  }
  OdeSolution sol;
  sol.trajectory = {t0, dt, std::move(fine.a)};
  sol.spin_energy = std::move(fine.spin_energy);
  return sol;
}

SegmentedTrajectory propagate_sections(const Ensemble& ens, const KernelTable& kernel,
                                       double t0, std::span<const SectionDrive> sections,
                                       std::span<const cplx> kicks) {
  if (sections.empty()) throw ConfigError("propagate_sections: no sections");
  const double dt = kernel.dt;
  if (sections.front().begin != 0) throw ConfigError("first section must start at index 0");
  for (std::size_t n = 0; n < sections.size(); ++n) {
    const auto& s = sections[n];
    if (s.end <= s.begin) throw ConfigError("section " + std::to_string(n) + " is empty");
    if (s.eta.size() != s.end - s.begin + 1) {
      throw ConfigError("section " + std::to_string(n) + ": drive has " +
                        std::to_string(s.eta.size()) + " samples, expected " +
                        std::to_string(s.end - s.begin + 1));
    }
    if (n > 0 && s.begin != sections[n - 1].end) {
      throw ConfigError("section " + std::to_string(n) + " does not start where the previous ends");
    }
  }
  const std::size_t total = sections.back().end + 1;
  if (!kicks.empty() && kicks.size() < total) {
    throw ConfigError("propagate_sections: kick sequence shorter than the grid");
  }

  SegmentedTrajectory out;
  out.full = {t0, dt, std::vector<cplx>(total)};
  MemoryState state = MemoryState::empty(ens.size());
  for (std::size_t n = 0; n < sections.size(); ++n) {
    const auto& s = sections[n];
    const std::size_t len = s.end - s.begin + 1;
    std::vector<cplx> drive = driving_term(ens.params, s.eta, dt);
    if (!kicks.empty()) {
      std::vector<cplx> local(kicks.begin() + static_cast<std::ptrdiff_t>(s.begin),
                              kicks.begin() + static_cast<std::ptrdiff_t>(s.end + 1));
      // A kick at the first sample belongs to the previous section.
      local[0] = n == 0 ? local[0] : cplx(0.0);
      const auto imp = impulse_term(ens.params, local, dt);
      for (std::size_t m = 0; m < len; ++m) drive[m] += imp[m];
    }
    std::vector<cplx> memory;
    if (n > 0) memory = memory_term(state, ens, dt, len);
    const Trajectory part =
        solve_volterra(kernel, drive, memory, t0 + static_cast<double>(s.begin) * dt);
    std::copy(part.samples.begin(), part.samples.end(),
              out.full.samples.begin() + static_cast<std::ptrdiff_t>(s.begin));
    out.boundaries.push_back(s.begin);
    out.memories.push_back(state);
    if (n + 1 < sections.size()) state = memory_handoff(state, part.samples, dt, ens);
  }
  out.boundaries.push_back(sections.back().end);
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t_ns,re_A,im_A,abs2_A\n";
  char line[128];
  for (std::size_t m = 0; m < traj.size(); ++m) {
    const cplx a = traj.samples[m];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", traj.time(m), a.real(),
                  a.imag(), std::norm(a));
    out << line;
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_trajectory_csv(out, traj);
}

}  // namespace spinmem

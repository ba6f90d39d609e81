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

#include "spinmem/basis.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Forcing columns for unit sine drives k = 1..n on `count` samples.
Eigen::MatrixXcd sine_drives(const SystemParams& params, std::size_t n, double omega_f,
                             double dt, std::size_t count) {
  Eigen::MatrixXcd f(idx(count), idx(n));
  std::vector<cplx> eta(count);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = static_cast<double>(k + 1) * omega_f;
    for (std::size_t m = 0; m < count; ++m) eta[m] = std::sin(w * static_cast<double>(m) * dt);
    const auto d = driving_term(params, eta, dt);
    for (std::size_t m = 0; m < count; ++m) f(idx(m), idx(k)) = d[m];
  }
  return f;
}

Eigen::MatrixXcd interval_gram(const Eigen::MatrixXcd& y, std::size_t begin, std::size_t end,
                               double dt) {
  const Index n = y.cols();
  if (end <= begin) return Eigen::MatrixXcd::Zero(n, n);
  const Index rows = idx(end - begin + 1);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(rows, dt);
  w(0) = w(rows - 1) = 0.5 * dt;
  const auto ys = y.middleRows(idx(begin), rows);
  Eigen::MatrixXcd g = ys.adjoint() * (w.asDiagonal() * ys);
  return 0.5 * (g + g.adjoint());
}

void check_sizes(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(want) +
                      " coefficients, got " + std::to_string(got));
  }
}

}  // namespace

cplx pulse_eval(const Pulse& pulse, double t) {
  if (t < pulse.section_start || t > pulse.section_end) return 0.0;
  const double x = pulse.omega_f * (t - pulse.section_start);
  cplx sum = 0.0;
  for (std::size_t k = 0; k < pulse.coeffs.size(); ++k) {
    sum += pulse.coeffs[k] * std::sin(static_cast<double>(k + 1) * x);
  }
  return sum;
}

std::vector<cplx> sample_pulse(const Pulse& pulse, double t0, double dt, std::size_t count) {
  std::vector<cplx> out(count);
  for (std::size_t m = 0; m < count; ++m) out[m] = pulse_eval(pulse, t0 + static_cast<double>(m) * dt);
  return out;
}

double pulse_power(const Pulse& pulse) {
  double p = 0.0;
  for (const cplx& c : pulse.coeffs) p += std::norm(c / pulse.amp_scale);
  return 0.5 * p;
}

Pulse BasisSet::write_pulse(std::span<const cplx> xi) const {
  const auto lay = grid.layout();
  return {std::vector<cplx>(xi.begin(), xi.end()), spec.omega_f_write, lay.t1, lay.t2, 1.0};
}

Pulse BasisSet::read_pulse(std::span<const cplx> zeta) const {
  const auto lay = grid.layout();
  return {std::vector<cplx>(zeta.begin(), zeta.end()), spec.omega_f_read, lay.t2, lay.t3, 1.0};
}

BasisSet build_basis(const GridLayout& grid, BasisSpec spec, const Ensemble& ens,
                     const KernelTable& kernel) {
  if (spec.n1 == 0 || spec.n2 == 0) throw ConfigError("basis: n1 and n2 must be at least 1");
  const double dt = grid.dt;
  if (std::abs(kernel.dt - dt) > 1e-12 * dt) throw ConfigError("basis: kernel dt differs from grid");
  const std::size_t n_w = grid.i2 + 1;
  const std::size_t n_r = grid.i3 - grid.i2 + 1;
  if (spec.omega_f_write <= 0.0) spec.omega_f_write = std::numbers::pi / (static_cast<double>(grid.i2) * dt);
  if (spec.omega_f_read <= 0.0) {
    spec.omega_f_read = std::numbers::pi / (static_cast<double>(grid.i3 - grid.i2) * dt);
  }

  BasisSet basis;
  basis.grid = grid;
  basis.spec = spec;
  basis.write = solve_volterra_batch(
      kernel, sine_drives(ens.params, spec.n1, spec.omega_f_write, dt, n_w));

  // Stored write responses feed the readout section through the memory terms.
  std::vector<MemoryState> empty(spec.n1, MemoryState::empty(ens.size()));
  std::vector<std::vector<cplx>> histories(spec.n1);
  for (std::size_t k = 0; k < spec.n1; ++k) {
    histories[k].resize(n_w);
    for (std::size_t m = 0; m < n_w; ++m) histories[k][m] = basis.write(idx(m), idx(k));
  }
  const auto states = memory_handoff(empty, histories, dt, ens);
  const auto memory = memory_term(states, ens, dt, n_r);

  Eigen::MatrixXcd forcing(idx(n_r), idx(spec.n1 + spec.n2));
  for (std::size_t k = 0; k < spec.n1; ++k) {
    for (std::size_t m = 0; m < n_r; ++m) forcing(idx(m), idx(k)) = memory[k][m];
  }
  forcing.rightCols(idx(spec.n2)) = sine_drives(ens.params, spec.n2, spec.omega_f_read, dt, n_r);
  const Eigen::MatrixXcd read = solve_volterra_batch(kernel, forcing);
  basis.memory = read.leftCols(idx(spec.n1));
  basis.read = read.rightCols(idx(spec.n2));
  return basis;
}

Trajectory assemble_write(std::span<const cplx> xi, const BasisSet& basis) {
  check_sizes(xi.size(), basis.n1(), "assemble_write");
  Eigen::VectorXcd c = Eigen::Map<const Eigen::VectorXcd>(xi.data(), idx(xi.size()));
  const Eigen::VectorXcd a = basis.write * c;
  return {basis.grid.t1, basis.grid.dt, std::vector<cplx>(a.data(), a.data() + a.size())};
}

Trajectory assemble_read(std::span<const cplx> zeta, std::span<const cplx> xi,
                         const BasisSet& basis) {
  check_sizes(xi.size(), basis.n1(), "assemble_read (xi)");
  check_sizes(zeta.size(), basis.n2(), "assemble_read (zeta)");
  const Eigen::VectorXcd a =
      basis.memory * Eigen::Map<const Eigen::VectorXcd>(xi.data(), idx(xi.size())) +
      basis.read * Eigen::Map<const Eigen::VectorXcd>(zeta.data(), idx(zeta.size()));
  return {basis.grid.time(basis.grid.i2), basis.grid.dt,
          std::vector<cplx>(a.data(), a.data() + a.size())};
}

Eigen::VectorXcd stack_coefficients(std::span<const cplx> xi, std::span<const cplx> zeta) {
  Eigen::VectorXcd v(idx(xi.size() + zeta.size()));
  for (std::size_t k = 0; k < xi.size(); ++k) v(idx(k)) = xi[k];
  for (std::size_t l = 0; l < zeta.size(); ++l) v(idx(xi.size() + l)) = zeta[l];
  return v;
}

GramMatrices gram(const BasisSet& basis) {
  const auto& g = basis.grid;
  const double dt = g.dt;
  Eigen::MatrixXcd y(basis.read.rows(), basis.memory.cols() + basis.read.cols());
  y << basis.memory, basis.read;
  const std::size_t a = g.ia - g.i2, b = g.ib - g.i2, c = g.ic - g.i2;
  GramMatrices out;
  out.delay = interval_gram(y, 0, a, dt);
  out.bin0 = interval_gram(y, a, b, dt);
  out.bin1 = interval_gram(y, b, c, dt);
  out.readout = interval_gram(y, a, c, dt);
  out.write = interval_gram(basis.write, 0, g.i2, dt);
  out.endpoint = y.row(idx(a));
  out.delay_length = static_cast<double>(a) * dt;
  out.readout_length = static_cast<double>(c - a) * dt;
  return out;
}

cplx overlap_integral(std::span<const cplx> x, std::span<const cplx> y, double dt,
                      std::size_t begin, std::size_t end) {
  if (end >= x.size() || end >= y.size()) throw ConfigError("overlap: interval exceeds samples");
  if (end <= begin) return 0.0;
  if (x.data() == y.data()) {
    // Self overlap: exactly real.
    double e = 0.5 * (std::norm(x[begin]) + std::norm(x[end]));
    for (std::size_t m = begin + 1; m < end; ++m) e += std::norm(x[m]);
    return e * dt;
  }
  cplx sum = 0.5 * (x[begin] * std::conj(y[begin]) + x[end] * std::conj(y[end]));
  for (std::size_t m = begin + 1; m < end; ++m) sum += x[m] * std::conj(y[m]);
  return sum * dt;
}

}  // namespace spinmem

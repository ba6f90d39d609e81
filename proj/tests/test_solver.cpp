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

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"

#include "spinmem/coeff_table.hpp"
#include "spinmem/errors.hpp"
#include "test_support.hpp"

using namespace spinmem;
using spinmem::testing::Gen;
using spinmem::testing::rel_max_diff;
using spinmem::testing::SmallCase;

namespace {

struct SinePulse {
  std::vector<cplx> c;
  double wf;
  cplx operator()(double t) const {
    cplx v = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) v += c[k] * std::sin(static_cast<double>(k + 1) * wf * t);
    return v;
  }
};

SinePulse random_pulse(Gen& gen, double kappa, double length) {
  return {gen.coeffs(1 + gen.index(5), kappa), std::numbers::pi / length * (1.0 + gen.index(2))};
}

std::vector<cplx> sample(const SinePulse& p, double dt, std::size_t n) {
  std::vector<cplx> v(n);
  for (std::size_t m = 0; m < n; ++m) v[m] = p(dt * static_cast<double>(m));
  return v;
}

Trajectory volterra(const SmallCase& c, const std::vector<cplx>& eta) {
  return solve_volterra(c.kernel, driving_term(c.params, eta, c.kernel.dt), {});
}

}  // namespace

TEST(solver, no_coupling_returns_drive) {
  auto p = SystemParams::paper_defaults();
  p.Omega = 0.0;
  const auto d = paper_density(p);
  const auto ens = Ensemble::make(p, d, discretize(d, 200));
  const auto k = kernel_table(ens, 0.05, 20.0);
  Gen gen(1);
  std::vector<cplx> drive = gen.coeffs(401);
  const auto a = solve_volterra(k, drive, {});
  for (std::size_t m = 0; m < drive.size(); ++m) ASSERT_EQ(a.samples[m], drive[m]);
}

TEST(solver, rejects_length_mismatch) {
  const auto& c = SmallCase::get();
  const std::vector<cplx> a(10, 0.0), b(11, 0.0);
  EXPECT_THROW(solve_volterra(c.kernel, a, b), ConfigError);
  const std::vector<cplx> too_long(c.kernel.values.size() + 5, 0.0);
  EXPECT_THROW(solve_volterra(c.kernel, too_long, {}), ConfigError);
}

TEST(solver, reports_non_finite_step) {
  const auto& c = SmallCase::get();
  std::vector<cplx> drive(50, 0.0);
  drive[17] = std::numeric_limits<double>::quiet_NaN();
  try {
    solve_volterra(c.kernel, drive, {});
    FAIL() << "no exception";
  } catch (const NumericalInstabilityError& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos) << e.what();
  }
}

TEST(solver, rabi_period_under_constant_drive) {
  const auto p = SystemParams::paper_defaults();
  const auto d = paper_density(p);
  const auto ens = Ensemble::make(p, d, discretize(d, 4000));
  const double dt = 0.05, horizon = 400.0;
  const auto k = kernel_table(ens, dt, horizon);
  const std::vector<cplx> eta(static_cast<std::size_t>(horizon / dt) + 1, p.kappa);
  const auto a = solve_volterra(k, driving_term(p, eta, dt), {});
  // Dominant oscillation frequency of |A|^2 after the switch-on transient.
  double mean = 0.0, count = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a.time(m) >= 10.0) mean += std::norm(a.samples[m]), count += 1.0;
  }
  mean /= count;
  double best_f = 0.0, best_amp = 0.0;
  for (double f = 5.0; f <= 30.0; f += 0.01) {
    cplx s = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) {
      if (a.time(m) >= 10.0) s += (std::norm(a.samples[m]) - mean) * std::exp(cplx(0.0, -mhz_to_rad_ns(f) * a.time(m)));
    }
    if (std::abs(s) > best_amp) best_amp = std::abs(s), best_f = f;
  }
  const double period = 1e3 / best_f;
  const double expected = kTwoPi / mhz_to_rad_ns(13.62);
  EXPECT_NEAR(period, expected, 0.05 * expected);
}

TEST(solver, ode_closed_form_bare_cavity) {
  auto p = SystemParams::paper_defaults();
  p.Omega = 0.0;
  p.omega_c += 0.02;
  const auto spins = SpinStateVector::from_density(p, paper_density(p), 50);
  const auto sol = solve_ode_reference(p, spins, [](double) { return cplx(0.0); }, 1.0, 0.0, 0.05, 2000);
  const cplx sc(p.kappa, p.delta_c());
  for (std::size_t m = 0; m < sol.trajectory.size(); m += 100) {
    EXPECT_LT(std::abs(sol.trajectory.samples[m] - std::exp(-sc * sol.trajectory.time(m))), 1e-10);
  }
}

TEST(solver, ode_zero_state_stays_zero) {
  const auto p = SystemParams::paper_defaults();
  const auto spins = SpinStateVector::from_density(p, paper_density(p), 200);
  const auto sol = solve_ode_reference(p, spins, [](double) { return cplx(0.0); }, 0.0, 0.0, 0.05, 500);
  for (const auto& v : sol.trajectory.samples) ASSERT_EQ(v, cplx(0.0));
}

TEST(solver, couplings_sum_to_omega_squared) {
  const auto p = SystemParams::paper_defaults();
  const auto spins = SpinStateVector::from_density(p, paper_density(p), 4000);
  double s = 0.0;
  for (double g : spins.couplings) s += g * g;
  EXPECT_NEAR(s / (p.Omega * p.Omega), 1.0, 1e-8);
}

TEST(solver, ode_energy_balance) {
  const auto p = SystemParams::paper_defaults();
  const auto spins = SpinStateVector::from_density(p, paper_density(p), 1000);
  Gen gen(41);
  const auto pulse = random_pulse(gen, p.kappa, 36.72);
  const double dt = 0.05;
  const auto sol = solve_ode_reference(p, spins, pulse, 0.0, 0.0, dt, 1500, 4);
  const auto& a = sol.trajectory.samples;
  double scale = 0.0, worst = 0.0;
  for (std::size_t m = 1; m + 1 < a.size(); ++m) {
    const double e_prev = std::norm(a[m - 1]) + sol.spin_energy[m - 1];
    const double e_next = std::norm(a[m + 1]) + sol.spin_energy[m + 1];
    const double lhs = (e_next - e_prev) / (2.0 * dt);
    const double rhs = -2.0 * p.kappa * std::norm(a[m]) -
                       2.0 * (std::conj(pulse(sol.trajectory.time(m))) * a[m]).real();
    scale = std::max(scale, std::abs(rhs));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  EXPECT_LT(worst, 1e-4 * scale);
}

TEST(solver, volterra_matches_ode_random_pulses) {
  const auto& c = SmallCase::get();
  const auto spins = SpinStateVector::from_density(c.params, c.density, 4000);
  Gen gen(43);
  const std::size_t n = c.grid.i3 + 1;
  for (int trial = 0; trial < 4; ++trial) {
    const auto pulse = random_pulse(gen, c.params.kappa, 36.72);
    const auto a = volterra(c, sample(pulse, c.kernel.dt, n));
    const auto ode = solve_ode_reference(c.params, spins, pulse, 0.0, 0.0, c.kernel.dt, n - 1);
    EXPECT_LT(rel_max_diff(a.samples, ode.trajectory.samples), 1e-5) << trial;
  }
}

TEST(solver, second_order_convergence) {
  const auto p = SystemParams::paper_defaults();
  const auto d = paper_density(p);
  const auto ens = Ensemble::make(p, d, discretize(d, 4000));
  const auto spins = SpinStateVector::from_density(p, d, 4000);
  Gen gen(47);
  const auto pulse = random_pulse(gen, p.kappa, 20.0);
  const double horizon = 40.0;
  double err[2];
  for (int level = 0; level < 2; ++level) {
    const double dt = 0.1 / (1 << level);
    const std::size_t n = static_cast<std::size_t>(std::lround(horizon / dt)) + 1;
    const auto k = kernel_table(ens, dt, horizon);
    const auto a = solve_volterra(k, driving_term(p, sample(pulse, dt, n), dt), {});
    const auto ode = solve_ode_reference(p, spins, pulse, 0.0, 0.0, dt, n - 1, 8);
    err[level] = rel_max_diff(a.samples, ode.trajectory.samples);
  }
  EXPECT_NEAR(err[0] / err[1], 4.0, 0.6) << err[0] << " " << err[1];
}

TEST(solver, linearity_property) {
  const auto& c = SmallCase::get();
  Gen gen(53);
  const std::size_t n = c.grid.i3 + 1;
  for (int trial = 0; trial < 10; ++trial) {
    const auto e1 = sample(random_pulse(gen, c.params.kappa, 36.72), c.kernel.dt, n);
    const auto e2 = sample(random_pulse(gen, c.params.kappa, 73.44), c.kernel.dt, n);
    const cplx c1 = gen.cnormal(), c2 = gen.cnormal();
    std::vector<cplx> mix(n);
    for (std::size_t m = 0; m < n; ++m) mix[m] = c1 * e1[m] + c2 * e2[m];
    const auto a1 = volterra(c, e1), a2 = volterra(c, e2), am = volterra(c, mix);
    std::vector<cplx> sum(n);
    for (std::size_t m = 0; m < n; ++m) sum[m] = c1 * a1.samples[m] + c2 * a2.samples[m];
    EXPECT_LT(rel_max_diff(am.samples, sum), 1e-10) << trial;
  }
}

TEST(solver, batch_matches_single) {
  const auto& c = SmallCase::get();
  Gen gen(59);
  const std::size_t n = 900;
  Eigen::MatrixXcd forcing(n, 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto d = driving_term(c.params, sample(random_pulse(gen, c.params.kappa, 36.72), c.kernel.dt, n), c.kernel.dt);
    for (std::size_t m = 0; m < n; ++m) forcing(static_cast<Eigen::Index>(m), j) = d[m];
  }
  const auto batch = solve_volterra_batch(c.kernel, forcing);
  for (Eigen::Index j = 0; j < 3; ++j) {
    std::vector<cplx> col(forcing.col(j).data(), forcing.col(j).data() + n);
    const auto single = solve_volterra(c.kernel, col, {});
    for (std::size_t m = 0; m < n; ++m) {
      ASSERT_LT(std::abs(batch(static_cast<Eigen::Index>(m), j) - single.samples[m]), 1e-13);
    }
  }
}

TEST(solver, zero_drive_everywhere) {
  const auto& c = SmallCase::get();
  std::vector<SectionDrive> s{{0, c.grid.i2, std::vector<cplx>(c.grid.i2 + 1, 0.0)},
                              {c.grid.i2, c.grid.i3, std::vector<cplx>(c.grid.i3 - c.grid.i2 + 1, 0.0)}};
  const auto r = propagate_sections(c.ens, c.kernel, 0.0, s);
  for (const auto& v : r.full.samples) ASSERT_EQ(v, cplx(0.0));
}

TEST(solver, split_invariance_property) {
  const auto& c = SmallCase::get();
  Gen gen(61);
  const std::size_t n = c.grid.i3;
  for (int trial = 0; trial < 5; ++trial) {
    const auto pulse = random_pulse(gen, c.params.kappa, 36.72);
    const auto eta = sample(pulse, c.kernel.dt, n + 1);
    const std::size_t cut = 1 + gen.index(n - 2);
    std::vector<SectionDrive> one{{0, n, eta}};
    // The second section restarts its drive clock at the cut.
    std::vector<SectionDrive> two{{0, cut, std::vector<cplx>(eta.begin(), eta.begin() + cut + 1)},
                                  {cut, n, std::vector<cplx>(eta.begin() + cut, eta.end())}};
    const auto a = propagate_sections(c.ens, c.kernel, 0.0, one).full;
    const auto b = propagate_sections(c.ens, c.kernel, 0.0, two);
    EXPECT_LT(rel_max_diff(b.full.samples, a.samples), 1e-8) << "cut " << cut;
    ASSERT_EQ(b.boundaries.size(), 3u);
    EXPECT_EQ(b.boundaries[1], cut);
  }
}

TEST(solver, sections_are_validated) {
  const auto& c = SmallCase::get();
  std::vector<SectionDrive> gap{{0, 10, std::vector<cplx>(11, 0.0)}, {11, 20, std::vector<cplx>(10, 0.0)}};
  EXPECT_THROW(propagate_sections(c.ens, c.kernel, 0.0, gap), ConfigError);
  std::vector<SectionDrive> short_eta{{0, 10, std::vector<cplx>(5, 0.0)}};
  EXPECT_THROW(propagate_sections(c.ens, c.kernel, 0.0, short_eta), ConfigError);
  EXPECT_THROW(propagate_sections(c.ens, c.kernel, 0.0, {}), ConfigError);
}

TEST(solver, write_then_free_decay_tracks_estimate) {
  const auto p = SystemParams::paper_defaults();
  const auto d = paper_density(p);
  const auto ens = Ensemble::make(p, d, discretize(d, 4000));
  const double dt = 0.05, horizon = 400.0;
  const auto k = kernel_table(ens, dt, horizon);
  const auto grid = snap_to_grid(SectionLayout::paper_case_a(), dt);
  const auto coeffs = to_absolute(bundled_table("table1"), p.kappa);
  const SinePulse write{coeffs.xi0, std::numbers::pi / (dt * static_cast<double>(grid.i2))};
  const std::size_t n = static_cast<std::size_t>(horizon / dt);
  std::vector<SectionDrive> s{{0, grid.i2, sample(write, dt, grid.i2 + 1)},
                              {grid.i2, n, std::vector<cplx>(n - grid.i2 + 1, 0.0)}};
  const auto a = propagate_sections(ens, k, 0.0, s).full;
  // Least squares through log|A|^2 at its local maxima after the write pulse.
  double st = 0, sy = 0, stt = 0, sty = 0, cnt = 0;
  for (std::size_t m = grid.i2 + 1; m + 1 < a.size(); ++m) {
    const double v = std::norm(a.samples[m]);
    if (v > std::norm(a.samples[m - 1]) && v >= std::norm(a.samples[m + 1])) {
      const double t = a.time(m), y = std::log(v);
      st += t, sy += y, stt += t * t, sty += t * y, cnt += 1;
    }
  }
  ASSERT_GE(cnt, 3);
  const double rate = -(cnt * sty - st * sy) / (cnt * stt - st * st);
  const double gamma = decoherence_estimate(p, d);
  EXPECT_NEAR(rate, gamma, 0.2 * gamma);
}

TEST(solver, trajectory_csv_format) {
  Trajectory t{1.0, 0.5, {cplx(0.1, -0.2), cplx(1.0 / 3.0, 0.0)}};
  std::ostringstream out;
  write_trajectory_csv(out, t);
  std::istringstream in(out.str());
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "t_ns,re_A,im_A,abs2_A");
  EXPECT_NE(row1.find("0.33333333333333331"), std::string::npos) << row1;
  EXPECT_EQ(row1.substr(0, 4), "1.5,");
}

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

#include "spinmem/kernel.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gtest/gtest.h"

#include "spinmem/errors.hpp"
#include "test_support.hpp"

using namespace spinmem;
using spinmem::testing::Gen;
using spinmem::testing::SmallCase;

namespace {

cplx spin_rate(const SystemParams& p, double w) { return {p.gamma, w - p.omega_p}; }
cplx cavity_rate(const SystemParams& p) { return {p.kappa, p.delta_c()}; }

// Adaptive quadrature of the continuous kernel integrand over the density.
cplx kernel_oracle(const SystemParams& p, const SpinDensity& d, double lag) {
  using boost::math::quadrature::gauss_kronrod;
  const cplx sc = cavity_rate(p);
  auto part = [&](bool imag) {
    auto f = [&](double w) {
      const cplx s = spin_rate(p, w);
      const cplx v = (std::exp(-s * lag) - std::exp(-sc * lag)) / (s - sc);
      return density_at(d, w) * (imag ? v.imag() : v.real());
    };
    const auto sup = d.support();
    const double cuts[] = {sup.lo, d.center() - 0.05, d.center(), d.center() + 0.05, sup.hi};
    double total = 0.0;
    for (int i = 0; i < 4; ++i) total += gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 12, 1e-12);
    return total;
  };
  return p.Omega * p.Omega * cplx(part(false), part(true));
}

// Adaptive quadrature of -int_0^t eta(tau) exp(-s_c (t - tau)) dtau.
template <class Eta>
cplx drive_oracle(const SystemParams& p, Eta eta, double t) {
  using boost::math::quadrature::gauss_kronrod;
  const cplx sc = cavity_rate(p);
  auto re = [&](double tau) { return (eta(tau) * std::exp(-sc * (t - tau))).real(); };
  auto im = [&](double tau) { return (eta(tau) * std::exp(-sc * (t - tau))).imag(); };
  return -cplx(gauss_kronrod<double, 61>::integrate(re, 0.0, t, 12, 1e-12),
               gauss_kronrod<double, 61>::integrate(im, 0.0, t, 12, 1e-12));
}

}  // namespace

TEST(kernel, zero_lag_is_zero) {
  const auto& c = SmallCase::get();
  EXPECT_EQ(c.kernel.values[0], cplx(0.0));
  EXPECT_EQ(kernel_value(c.ens, 0.0), cplx(0.0));
}

TEST(kernel, no_coupling_no_kernel) {
  auto p = SystemParams::paper_defaults();
  p.Omega = 0.0;
  const auto d = paper_density(p);
  const auto ens = Ensemble::make(p, d, discretize(d, 800));
  const auto k = kernel_table(ens, 0.05, 20.0);
  for (const auto& v : k.values) ASSERT_EQ(v, cplx(0.0));
}

TEST(kernel, matches_adaptive_quadrature) {
  const auto p = SystemParams::paper_defaults();
  const auto d = paper_density(p);
  const auto ens = Ensemble::make(p, d, discretize(d, 20000));
  const auto table = kernel_table(ens, 0.05, 12.0);
  const cplx ref = kernel_oracle(p, d, 10.0);
  EXPECT_LT(std::abs(table.values[200] - ref) / std::abs(ref), 1e-8);
  EXPECT_LT(std::abs(kernel_value(ens, 10.0) - ref) / std::abs(ref), 1e-8);
}

TEST(kernel, frequency_grid_converged) {
  const auto p = SystemParams::paper_defaults();
  const auto d = paper_density(p);
  const auto e1 = Ensemble::make(p, d, discretize(d, 20000));
  const auto e2 = Ensemble::make(p, d, discretize(d, 40000));
  for (double lag : {1.0, 10.0, 50.0, 110.0}) {
    const cplx a = kernel_value(e1, lag), b = kernel_value(e2, lag);
    EXPECT_LT(std::abs(a - b), 1e-8 * std::max(1.0, std::abs(b))) << "lag " << lag;
  }
}

TEST(kernel, table_matches_pointwise_values) {
  const auto& c = SmallCase::get();
  Gen gen(3);
  for (int i = 0; i < 20; ++i) {
    const std::size_t m = gen.index(c.kernel.values.size());
    const cplx ref = kernel_value(c.ens, static_cast<double>(m) * c.kernel.dt);
    EXPECT_LT(std::abs(c.kernel.values[m] - ref), 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(kernel, memory_decays) {
  const auto& c = SmallCase::get();
  double peak = 0.0;
  for (const auto& v : c.kernel.values) peak = std::max(peak, std::abs(v));
  EXPECT_LT(std::abs(kernel_value(c.ens, 10.0 / c.params.kappa)), 1e-3 * peak);
}

TEST(kernel, degenerate_denominator_continuity) {
  const cplx sc(0.0025, 0.0);
  for (double x : {0.05, 1.0, 10.0, 100.0}) {
    const cplx limit = -x * std::exp(-sc * x);
    for (double eps : {0.0, 1e-14, 1e-12, 1e-10}) {
      const cplx v = kernel_mode(sc + cplx(0.0, eps), sc, x);
      EXPECT_LT(std::abs(v - limit), 1e-8 * std::abs(limit)) << x << " " << eps;
    }
  }
}

TEST(kernel, mode_branches_agree) {
  // Either side of the series switch the two formulas must coincide.
  Gen gen(17);
  for (int i = 0; i < 200; ++i) {
    const cplx sc(gen.uniform(0.0, 0.01), gen.uniform(-0.5, 0.5));
    const double x = gen.uniform(0.01, 200.0);
    const double r = gen.uniform(0.3, 0.7) / x;
    const cplx s = sc + std::polar(r, gen.uniform(0.0, kTwoPi));
    const cplx direct = (std::exp(-s * x) - std::exp(-sc * x)) / (s - sc);
    EXPECT_LT(std::abs(kernel_mode(s, sc, x) - direct), 1e-9 * std::abs(direct) + 1e-15);
  }
}

TEST(kernel, drive_zero) {
  const auto p = SystemParams::paper_defaults();
  const std::vector<cplx> eta(100, 0.0);
  for (const auto& v : driving_term(p, eta, 0.05)) ASSERT_EQ(v, cplx(0.0));
}

TEST(kernel, drive_constant_closed_form) {
  const auto p = SystemParams::paper_defaults();
  const double eta0 = p.kappa, dt = 0.05;
  const std::vector<cplx> eta(2001, eta0);
  const auto d = driving_term(p, eta, dt);
  for (std::size_t m = 0; m < d.size(); m += 50) {
    const double t = static_cast<double>(m) * dt;
    const double ref = -(eta0 / p.kappa) * (1.0 - std::exp(-p.kappa * t));
    EXPECT_NEAR(d[m].real(), ref, 1e-12);
    EXPECT_NEAR(d[m].imag(), 0.0, 1e-14);
  }
}

TEST(kernel, drive_sine_vs_quadrature) {
  auto p = SystemParams::paper_defaults();
  p.omega_c += 0.05;  // detuned cavity exercises the complex rate
  const double dt = 0.001, wf = kTwoPi / 73.44;
  const std::size_t n = 36721;
  std::vector<cplx> eta(n);
  auto f = [&](double t) { return cplx(0.3, -0.7) * p.kappa * std::sin(wf * t); };
  for (std::size_t m = 0; m < n; ++m) eta[m] = f(static_cast<double>(m) * dt);
  const auto d = driving_term(p, eta, dt);
  double scale = spinmem::testing::max_abs(d);
  for (std::size_t m : {1000u, 9000u, 20000u, 36720u}) {
    const cplx ref = drive_oracle(p, f, static_cast<double>(m) * dt);
    EXPECT_LT(std::abs(d[m] - ref), 1e-8 * scale) << m;
  }
}

TEST(kernel, impulse_is_cavity_ring_down) {
  const auto p = SystemParams::paper_defaults();
  std::vector<cplx> kicks(400, 0.0);
  kicks[3] = 1.0;
  const auto n = impulse_term(p, kicks, 0.05);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(n[m], cplx(0.0));
  for (std::size_t m = 3; m < n.size(); ++m) {
    EXPECT_NEAR(std::abs(n[m] - std::exp(-cavity_rate(p) * (0.05 * (m - 3.0)))), 0.0, 1e-12);
  }
}

TEST(kernel, handoff_from_zero_is_zero) {
  const auto& c = SmallCase::get();
  const auto st = memory_handoff(MemoryState::empty(c.ens.size()), std::vector<cplx>(500, 0.0), 0.05, c.ens);
  EXPECT_EQ(st.boundary_amp, cplx(0.0));
  for (const auto& v : st.memory_integral) ASSERT_EQ(v, cplx(0.0));
}

TEST(kernel, handoff_single_spike) {
  const auto& c = SmallCase::get();
  const double dt = 0.05;
  std::vector<cplx> a(401, 0.0);
  const std::size_t j = 150;
  a[j] = 1.0;
  const auto st = memory_handoff(MemoryState::empty(c.ens.size()), a, dt, c.ens);
  const double lag = dt * static_cast<double>(a.size() - 1 - j);
  for (std::size_t k = 0; k < c.ens.size(); k += 97) {
    const cplx ref = dt * std::exp(-spin_rate(c.params, c.ens.grid.points[k]) * lag);
    EXPECT_LT(std::abs(st.memory_integral[k] - ref), 1e-4 * dt) << k;
  }
}

TEST(kernel, handoff_semigroup) {
  const auto& c = SmallCase::get();
  Gen gen(29);
  std::vector<cplx> a(801);
  for (auto& v : a) v = gen.cnormal();
  const auto start = memory_handoff(MemoryState::empty(c.ens.size()),
                                    std::vector<cplx>(a.begin(), a.begin() + 50), 0.05, c.ens);
  const auto whole = memory_handoff(start, a, 0.05, c.ens);
  const std::size_t mid = 333;
  const auto first = memory_handoff(start, std::span(a).first(mid + 1), 0.05, c.ens);
  const auto both = memory_handoff(first, std::span(a).subspan(mid), 0.05, c.ens);
  EXPECT_EQ(both.boundary_amp, whole.boundary_amp);
  for (std::size_t k = 0; k < c.ens.size(); ++k) {
    ASSERT_LT(std::abs(both.memory_integral[k] - whole.memory_integral[k]), 1e-9) << k;
  }
}

TEST(kernel, handoff_grid_mismatch) {
  const auto& c = SmallCase::get();
  EXPECT_THROW(memory_handoff(MemoryState::empty(3), std::vector<cplx>(5, 0.0), 0.05, c.ens),
               ConfigError);
}

TEST(kernel, memory_term_zero_state) {
  const auto& c = SmallCase::get();
  for (const auto& v : memory_term(MemoryState::empty(c.ens.size()), c.ens, 0.05, 300)) {
    ASSERT_EQ(v, cplx(0.0));
  }
}

TEST(kernel, memory_term_bare_ring_down) {
  const auto& c = SmallCase::get();
  auto st = MemoryState::empty(c.ens.size());
  st.boundary_amp = 1.0;
  const auto f = memory_term(st, c.ens, 0.05, 2000);
  for (std::size_t m = 0; m < f.size(); m += 100) {
    const double t = 0.05 * static_cast<double>(m);
    EXPECT_LT(std::abs(f[m] - std::exp(-c.params.kappa * t)), 1e-12);
  }
}

TEST(kernel, memory_term_starts_at_boundary) {
  const auto& c = SmallCase::get();
  Gen gen(31);
  for (int trial = 0; trial < 5; ++trial) {
    MemoryState st{gen.cnormal(), gen.coeffs(c.ens.size())};
    const auto f = memory_term(st, c.ens, 0.05, 4);
    EXPECT_LT(std::abs(f[0] - st.boundary_amp), 1e-10 * std::abs(st.boundary_amp));
  }
}

TEST(kernel, memory_term_matches_direct_sum) {
  const auto& c = SmallCase::get();
  Gen gen(37);
  MemoryState st{gen.cnormal(), gen.coeffs(c.ens.size())};
  const auto f = memory_term(st, c.ens, 0.05, 1200);
  const double om2 = c.params.Omega * c.params.Omega;
  for (std::size_t m : {1u, 77u, 600u, 1199u}) {
    const double t = 0.05 * static_cast<double>(m);
    cplx ref = st.boundary_amp * std::exp(-cavity_rate(c.params) * t);
    for (std::size_t k = 0; k < c.ens.size(); ++k) {
      ref += om2 * c.ens.mass[k] *
             kernel_mode(spin_rate(c.params, c.ens.grid.points[k]), cavity_rate(c.params), t) *
             st.memory_integral[k];
    }
    EXPECT_LT(std::abs(f[m] - ref), 1e-9 * std::max(1.0, std::abs(ref))) << m;
  }
}

TEST(kernel, cache_round_trip) {
  const auto& c = SmallCase::get();
  const auto dir = std::filesystem::temp_directory_path() / "spinmem_kernel_cache_test";
  std::filesystem::remove_all(dir);
  const auto a = kernel_table_cached(c.ens, 0.05, 5.0, dir);
  const auto b = kernel_table_cached(c.ens, 0.05, 5.0, dir);
  ASSERT_EQ(a.values.size(), b.values.size());
  for (std::size_t m = 0; m < a.values.size(); ++m) {
    ASSERT_EQ(a.values[m], b.values[m]);
    ASSERT_EQ(a.right_half[m], b.right_half[m]);
    ASSERT_EQ(a.left_half[m], b.left_half[m]);
  }
  EXPECT_FALSE(load_kernel_table(kernel_cache_key(c.ens, 0.05, 7), dir / "missing.bin").has_value());
  std::filesystem::remove_all(dir);
}

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

#include "spinmem/retrieval.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"

#include "spinmem/coeff_table.hpp"
#include "spinmem/errors.hpp"
#include "test_support.hpp"

using namespace spinmem;
using spinmem::testing::case_a_basis;
using spinmem::testing::Gen;
using spinmem::testing::rel_max_diff;
using spinmem::testing::SmallCase;

namespace {

const ControlCoefficients& table1() {
  static const ControlCoefficients c = to_absolute(bundled_table("table1"), SmallCase::get().params.kappa);
  return c;
}

const GramMatrices& case_a_gram() {
  static const GramMatrices g = gram(case_a_basis());
  return g;
}

// Readout-section response of the encoded superposition, trajectory route.
Trajectory response(const Superposition& sup) {
  return assemble_read(table1().zeta, encode(sup, table1()), case_a_basis());
}

struct Window {
  std::size_t begin, end;
};

Window readout_window() {
  const auto& g = case_a_basis().grid;
  return {g.ia - g.i2, g.ic - g.i2};
}

RetrievalResult round_trip(const Superposition& sup, const RetrievalMatrices& mats) {
  const auto v = stack_coefficients(encode(sup, table1()), table1().zeta);
  return retrieve(overlaps(case_a_gram(), table1(), v), mats, sup);
}

}  // namespace

TEST(retrieval, rebit_endpoints) {
  const auto a = rebit_params(0.0), b = rebit_params(1.0);
  EXPECT_EQ(a.alpha, cplx(1.0));
  EXPECT_EQ(a.beta, cplx(0.0));
  EXPECT_EQ(b.alpha, cplx(0.0));
  EXPECT_EQ(b.beta, cplx(1.0));
}

TEST(retrieval, rebit_midpoint) {
  const auto s = rebit_params(0.5, +1);
  EXPECT_EQ(s.alpha, cplx(0.5, 0.5));
  EXPECT_EQ(s.beta, cplx(0.5, -0.5));
  EXPECT_DOUBLE_EQ(std::norm(s.alpha) + std::norm(s.beta), 1.0);
  const auto t = rebit_params(0.5, -1);
  EXPECT_EQ(t.alpha, cplx(0.5, -0.5));
}

TEST(retrieval, rebit_sum_is_one) {
  Gen gen(1);
  for (int i = 0; i < 10000; ++i) {
    const auto s = rebit_params(gen.uniform(0.0, 1.0), i % 2 ? 1 : -1);
    ASSERT_EQ(s.alpha + s.beta, cplx(1.0));
  }
}

TEST(retrieval, rebit_rejects_out_of_range) {
  EXPECT_THROW(rebit_params(-0.01), ConfigError);
  EXPECT_THROW(rebit_params(1.01), ConfigError);
  EXPECT_THROW(rebit_params(0.5, 0), ConfigError);
}

TEST(retrieval, encode_basis_states) {
  const auto& c = table1();
  EXPECT_EQ(encode({1.0, 0.0}, c), c.xi0);
  EXPECT_EQ(encode({0.0, 1.0}, c), c.xi1);
}

TEST(retrieval, encode_is_linear) {
  Gen gen(3);
  const auto& c = table1();
  for (int trial = 0; trial < 20; ++trial) {
    const Superposition s{gen.cnormal(), gen.cnormal()};
    const cplx k = gen.cnormal();
    const auto a = encode({k * s.alpha, k * s.beta}, c), b = encode(s, c);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(std::abs(a[i] - k * b[i]), 1e-14 * std::abs(a[i]) + 1e-300);
  }
}

TEST(retrieval, zero_overlaps) {
  const std::vector<cplx> z(100, 0.0);
  const auto [o0, o1] = overlaps(z, z, z, 0.05, 0, 99);
  EXPECT_EQ(o0, cplx(0.0));
  EXPECT_EQ(o1, cplx(0.0));
}

TEST(retrieval, self_overlap_is_energy) {
  const auto r0 = response({1.0, 0.0}), r1 = response({0.0, 1.0});
  const auto w = readout_window();
  const auto [o0, o1] = overlaps(r0.samples, r0.samples, r1.samples, r0.dt, w.begin, w.end);
  EXPECT_EQ(o0.imag(), 0.0);
  EXPECT_GT(o0.real(), 0.0);
  double e = 0.0;
  for (std::size_t m = w.begin; m <= w.end; ++m) {
    e += (m == w.begin || m == w.end ? 0.5 : 1.0) * std::norm(r0.samples[m]);
  }
  EXPECT_NEAR(o0.real(), e * r0.dt, 1e-12 * o0.real());
  (void)o1;
}

TEST(retrieval, gram_route_matches_quadrature) {
  Gen gen(5);
  const auto r0 = response({1.0, 0.0}), r1 = response({0.0, 1.0});
  const auto w = readout_window();
  for (int trial = 0; trial < 10; ++trial) {
    const Superposition s{gen.cnormal(), gen.cnormal()};
    const auto r = response(s);
    const auto direct = overlaps(r.samples, r0.samples, r1.samples, r.dt, w.begin, w.end);
    const auto v = stack_coefficients(encode(s, table1()), table1().zeta);
    const auto viag = overlaps(case_a_gram(), table1(), v);
    EXPECT_LT(std::abs(viag.first - direct.first), 1e-10 * std::abs(direct.first));
    EXPECT_LT(std::abs(viag.second - direct.second), 1e-10 * std::abs(direct.second));
  }
}

TEST(retrieval, matrices_two_routes_agree) {
  const auto& b = case_a_basis();
  const auto& c = table1();
  const std::vector<cplx> no_zeta(c.zeta.size(), 0.0), no_xi(c.xi0.size(), 0.0);
  const auto s0 = assemble_read(no_zeta, c.xi0, b), s1 = assemble_read(no_zeta, c.xi1, b);
  const auto ro = assemble_read(c.zeta, no_xi, b);
  const auto w = readout_window();
  const auto direct = retrieval_matrices(s0.samples, s1.samples, ro.samples, s0.dt, w.begin, w.end);
  const auto viag = retrieval_matrices(case_a_gram(), c);
  EXPECT_LT((direct.f - viag.f).norm(), 1e-10 * viag.f.norm());
  EXPECT_LT((direct.f_r - viag.f_r).norm(), 1e-10 * viag.f.norm());
  EXPECT_NEAR(direct.cond, viag.cond, 1e-8 * viag.cond);
}

TEST(retrieval, noiseless_round_trip_random) {
  Gen gen(7);
  const auto mats = retrieval_matrices(case_a_gram(), table1());
  EXPECT_FALSE(mats.cond >= 1e8);
  for (int trial = 0; trial < 200; ++trial) {
    const Superposition s{gen.cnormal(), gen.cnormal()};
    const auto r = round_trip(s, mats);
    EXPECT_LT(std::abs(r.alpha_r - s.alpha), 1e-10 * std::max(1.0, std::abs(s.alpha)));
    EXPECT_LT(std::abs(r.beta_r - s.beta), 1e-10 * std::max(1.0, std::abs(s.beta)));
  }
}

TEST(retrieval, basis_state_overlaps_by_construction) {
  const auto mats = retrieval_matrices(case_a_gram(), table1());
  const auto v = stack_coefficients(table1().xi0, table1().zeta);
  const auto [o0, o1] = overlaps(case_a_gram(), table1(), v);
  EXPECT_LT(std::abs(o0 - (mats.f(0, 0) + mats.f_r(0))), 1e-12 * std::abs(o0));
  EXPECT_LT(std::abs(o1 - (mats.f(1, 0) + mats.f_r(1))), 1e-12 * std::abs(o0));
}

TEST(retrieval, qubit_sphere_sweep_noiseless) {
  const auto mats = retrieval_matrices(case_a_gram(), table1());
  double worst = 0.0;
  for (int i = 0; i < 21; ++i) {
    for (int j = 0; j < 41; ++j) {
      const auto s = qubit_params(std::numbers::pi * i / 20.0, kTwoPi * j / 40.0);
      const auto r = round_trip(s, mats);
      worst = std::max({worst, r.eps_alpha, r.eps_beta});
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(retrieval, trajectory_route_round_trip) {
  const auto r0 = response({1.0, 0.0}), r1 = response({0.0, 1.0});
  const auto mats = retrieval_matrices(case_a_gram(), table1());
  const auto w = readout_window();
  Gen gen(9);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = qubit_params(gen.uniform(0.0, std::numbers::pi), gen.uniform(0.0, kTwoPi));
    const auto r = response(s);
    const auto res = retrieve(overlaps(r.samples, r0.samples, r1.samples, r.dt, w.begin, w.end), mats, s);
    EXPECT_LT(std::max(res.eps_alpha, res.eps_beta), 1e-9);
  }
}

TEST(retrieval, affine_combination) {
  Gen gen(11);
  const auto mats = retrieval_matrices(case_a_gram(), table1());
  for (int trial = 0; trial < 20; ++trial) {
    const Superposition s1{gen.cnormal(), gen.cnormal()}, s2{gen.cnormal(), gen.cnormal()};
    const cplx c1 = gen.cnormal(), c2 = 1.0 - c1;
    const Superposition mix{c1 * s1.alpha + c2 * s2.alpha, c1 * s1.beta + c2 * s2.beta};
    // The readout pulse enters once, so only affine weights reproduce a physical response.
    const auto v1 = stack_coefficients(encode(s1, table1()), table1().zeta);
    const auto v2 = stack_coefficients(encode(s2, table1()), table1().zeta);
    const Eigen::VectorXcd v = c1 * v1 + c2 * v2;
    const auto r = retrieve(overlaps(case_a_gram(), table1(), v), mats, mix);
    EXPECT_LT(std::max(r.eps_alpha, r.eps_beta), 1e-9 * std::max(1.0, std::abs(mix.alpha) + std::abs(mix.beta)));
  }
}

TEST(retrieval, rebit_closure) {
  const auto r0 = response({1.0, 0.0}), r1 = response({0.0, 1.0});
  for (double x : {0.0, 0.13, 0.5, 0.77, 1.0}) {
    const auto s = rebit_params(x);
    const auto r = response(s);
    std::vector<cplx> ref(r.size());
    for (std::size_t m = 0; m < r.size(); ++m) ref[m] = s.alpha * r0.samples[m] + s.beta * r1.samples[m];
    EXPECT_LT(rel_max_diff(r.samples, ref), 1e-9) << x;
  }
}

TEST(retrieval, indistinguishable_states_are_rejected) {
  auto c = table1();
  c.xi1 = c.xi0;
  const auto mats = retrieval_matrices(case_a_gram(), c);
  EXPECT_THROW(retrieve({1.0, 1.0}, mats), RetrievalDegeneracyError);
}

TEST(retrieval, bloch_examples) {
  auto near = [](std::array<double, 3> a, std::array<double, 3> b) {
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-15) << i;
  };
  near(bloch_vector({1.0, 0.0}), {0.0, 0.0, 1.0});
  near(bloch_vector({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}), {1.0, 0.0, 0.0});
  near(bloch_vector(rebit_params(0.5, +1)), {0.0, -1.0, 0.0});
}

TEST(retrieval, bloch_norm_property) {
  Gen gen(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Superposition s{gen.cnormal(), gen.cnormal()};
    const auto r = bloch_vector(s);
    const double n2 = std::norm(s.alpha) + std::norm(s.beta);
    EXPECT_NEAR(r[0] * r[0] + r[1] * r[1] + r[2] * r[2], n2 * n2, 1e-12 * n2 * n2);
  }
}

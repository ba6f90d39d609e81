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
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

constexpr double kIllConditioned = 1e8;
constexpr double kSingular = 1e13;

double condition_number(const Eigen::Matrix2cd& f) {
  Eigen::JacobiSVD<Eigen::Matrix2cd> svd(f);
  const auto s = svd.singularValues();
  if (s(1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(1);
}

Eigen::VectorXcd stacked(const std::vector<cplx>& xi, const std::vector<cplx>& zeta) {
  return stack_coefficients(xi, zeta);
}

}  // namespace

Superposition rebit_params(double x, int branch) {
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("rebit_params: x must lie in [0, 1]");
  if (branch != 1 && branch != -1) throw ConfigError("rebit_params: branch must be +1 or -1");
  const double r = std::sqrt(x * (1.0 - x));
  const double s = static_cast<double>(branch);
  return {{1.0 - x, s * r}, {x, -s * r}};
}

Superposition qubit_params(double theta, double phi) {
  return {std::cos(0.5 * theta), std::sin(0.5 * theta) * std::polar(1.0, phi)};
}

std::vector<cplx> encode(const Superposition& sup, const ControlCoefficients& c) {
  if (c.xi0.size() != c.xi1.size()) throw ConfigError("encode: xi0 and xi1 differ in length");
  std::vector<cplx> xi(c.xi0.size());
  for (std::size_t k = 0; k < xi.size(); ++k) xi[k] = sup.alpha * c.xi0[k] + sup.beta * c.xi1[k];
  return xi;
}

RetrievalMatrices retrieval_matrices(const GramMatrices& gram, const ControlCoefficients& c) {
  const std::vector<cplx> no_zeta(c.zeta.size(), 0.0);
  const std::vector<cplx> no_xi(c.xi0.size(), 0.0);
  const Eigen::VectorXcd v0 = stacked(c.xi0, c.zeta), v1 = stacked(c.xi1, c.zeta);
  const Eigen::VectorXcd u0 = stacked(c.xi0, no_zeta), u1 = stacked(c.xi1, no_zeta);
  const Eigen::VectorXcd ur = stacked(no_xi, c.zeta);
  if (v0.size() != gram.readout.cols()) throw ConfigError("retrieval: coefficients do not match the basis");
  const Eigen::MatrixXcd& g = gram.readout;
  RetrievalMatrices m;
  const Eigen::VectorXcd gu0 = g * u0, gu1 = g * u1, gur = g * ur;
  m.f << v0.dot(gu0), v0.dot(gu1), v1.dot(gu0), v1.dot(gu1);
  m.f_r << v0.dot(gur), v1.dot(gur);
  m.cond = condition_number(m.f);
  return m;
}

RetrievalMatrices retrieval_matrices(std::span<const cplx> stored0, std::span<const cplx> stored1,
                                     std::span<const cplx> readout_only, double dt,
                                     std::size_t begin, std::size_t end) {
  const std::size_t n = readout_only.size();
  if (stored0.size() != n || stored1.size() != n) throw ConfigError("retrieval: grid mismatch");
  std::vector<cplx> ref0(n), ref1(n);
  for (std::size_t m = 0; m < n; ++m) {
    ref0[m] = stored0[m] + readout_only[m];
    ref1[m] = stored1[m] + readout_only[m];
  }
  RetrievalMatrices m;
  const std::span<const cplx> refs[2] = {ref0, ref1};
  for (int i = 0; i < 2; ++i) {
    m.f(i, 0) = overlap_integral(stored0, refs[i], dt, begin, end);
    m.f(i, 1) = overlap_integral(stored1, refs[i], dt, begin, end);
    m.f_r(i) = overlap_integral(readout_only, refs[i], dt, begin, end);
  }
  m.cond = condition_number(m.f);
  return m;
}

std::pair<cplx, cplx> overlaps(std::span<const cplx> response, std::span<const cplx> ref0,
                               std::span<const cplx> ref1, double dt, std::size_t begin,
                               std::size_t end) {
  return {overlap_integral(response, ref0, dt, begin, end),
          overlap_integral(response, ref1, dt, begin, end)};
}

std::pair<cplx, cplx> overlaps(const GramMatrices& gram, const ControlCoefficients& c,
                               const Eigen::VectorXcd& v) {
  const Eigen::VectorXcd gv = gram.readout * v;
  return {stacked(c.xi0, c.zeta).dot(gv), stacked(c.xi1, c.zeta).dot(gv)};
}

RetrievalResult retrieve(std::pair<cplx, cplx> o, const RetrievalMatrices& mats) {
  const double cond = mats.cond > 0.0 ? mats.cond : condition_number(mats.f);
  if (!(cond < kSingular)) {
    throw RetrievalDegeneracyError("retrieval matrix is singular (cond = " + std::to_string(cond) +
                                   "); the stored states are not distinguishable by this readout");
  }
  const Eigen::Vector2cd rhs(o.first - mats.f_r(0), o.second - mats.f_r(1));
  // Cramer's rule keeps the 2x2 solve free of pivoting decisions.
  const cplx det = mats.f(0, 0) * mats.f(1, 1) - mats.f(0, 1) * mats.f(1, 0);
  RetrievalResult r;
  r.alpha_r = (rhs(0) * mats.f(1, 1) - mats.f(0, 1) * rhs(1)) / det;
  r.beta_r = (mats.f(0, 0) * rhs(1) - mats.f(1, 0) * rhs(0)) / det;
  r.o0 = o.first;
  r.o1 = o.second;
  r.eps_alpha = r.eps_beta = std::numeric_limits<double>::quiet_NaN();
  r.cond = cond;
  r.ill_conditioned = cond >= kIllConditioned;
  return r;
}

RetrievalResult retrieve(std::pair<cplx, cplx> o, const RetrievalMatrices& mats,
                         const Superposition& known) {
  RetrievalResult r = retrieve(o, mats);
  r.eps_alpha = std::abs(known.alpha - r.alpha_r);
  r.eps_beta = std::abs(known.beta - r.beta_r);
  return r;
}

std::array<double, 3> bloch_vector(const Superposition& sup) {
  const cplx ab = std::conj(sup.alpha) * sup.beta;
  return {2.0 * ab.real(), 2.0 * ab.imag(), std::norm(sup.alpha) - std::norm(sup.beta)};
}

}  // namespace spinmem

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

#include "spinmem/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "spinmem/errors.hpp"
#include "spinmem/parallel.hpp"
#include "spinmem/rng.hpp"

namespace spinmem {

namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// Offsets into the packed real vector.
struct Layout {
  Index n1, n2;
  Index re_xi(int i) const { return 2 * i * n1; }
  Index im_xi(int i) const { return 2 * i * n1 + n1; }
  Index re_zeta() const { return 4 * n1; }
  Index im_zeta() const { return 4 * n1 + n2; }
  Index size() const { return 4 * n1 + 2 * n2; }
};

// v_i = M_i x for state i, with v_i = [xi_i; zeta].
MatrixXcd state_map(const Layout& l, int i) {
  MatrixXcd m = MatrixXcd::Zero(l.n1 + l.n2, l.size());
  for (Index k = 0; k < l.n1; ++k) {
    m(k, l.re_xi(i) + k) = 1.0;
    m(k, l.im_xi(i) + k) = cplx(0.0, 1.0);
  }
  for (Index k = 0; k < l.n2; ++k) {
    m(l.n1 + k, l.re_zeta() + k) = 1.0;
    m(l.n1 + k, l.im_zeta() + k) = cplx(0.0, 1.0);
  }
  return m;
}

// Real symmetric Q with x'Qx = Re or Im of v_i^H G v_j.
MatrixXd real_form(const MatrixXcd& mi, const MatrixXcd& g, const MatrixXcd& mj, bool imag) {
  const MatrixXcd b = mi.adjoint() * g * mj;
  const MatrixXd r = imag ? MatrixXd(b.imag()) : MatrixXd(b.real());
  return 0.5 * (r + r.transpose());
}

struct Form {
  MatrixXd q;
  double value(const VectorXd& x) const { return x.dot(q * x); }
  void grad(const VectorXd& x, double w, Eigen::Ref<VectorXd> g) const { g.noalias() += 2.0 * w * (q * x); }
  void hess(double w, Eigen::Ref<MatrixXd> h) const { h += 2.0 * w * q; }
};

// All problem terms as quadratic forms in the packed coefficients.
struct Forms {
  Layout l;
  Form bin[2][2];  // [state][bin]
  Form delay[2], endpoint[2], power[2];
  Form cross_re, cross_im;  // v_0^H G_readout v_1

  // sqrt(|c|^2 + eps^2) - eps for c = v_0^H G v_1.
  double cross(const VectorXd& x, double eps, double w, Eigen::Ref<VectorXd> g,
               Eigen::Ref<MatrixXd> h) const {
    const VectorXd ga = 2.0 * (cross_re.q * x), gb = 2.0 * (cross_im.q * x);
    const double a = 0.5 * x.dot(ga), b = 0.5 * x.dot(gb);
    const double f = std::sqrt(a * a + b * b + eps * eps);
    if (f > 0.0) {
      const VectorXd gf = (a * ga + b * gb) / f;
      if (g.size()) g += w * gf;
      if (h.size()) {
        h += (w / f) * (ga * ga.transpose() + gb * gb.transpose() + 2.0 * a * cross_re.q +
                        2.0 * b * cross_im.q - gf * gf.transpose());
      }
    }
    return f - eps;
  }

  // |c|^2 for c = v_0^H G v_1.
  double cross_sq(const VectorXd& x, double w, Eigen::Ref<VectorXd> g, Eigen::Ref<MatrixXd> h) const {
    const VectorXd ga = 2.0 * (cross_re.q * x), gb = 2.0 * (cross_im.q * x);
    const double a = 0.5 * x.dot(ga), b = 0.5 * x.dot(gb);
    if (g.size()) g += 2.0 * w * (a * ga + b * gb);
    if (h.size()) {
      h += 2.0 * w * (ga * ga.transpose() + gb * gb.transpose() + 2.0 * a * cross_re.q + 2.0 * b * cross_im.q);
    }
    return a * a + b * b;
  }

  // Energy of each state outside its own bin.
  double leakage(const VectorXd& x, double w, Eigen::Ref<VectorXd> g, Eigen::Ref<MatrixXd> h) const {
    double v = 0.0;
    for (const Form* f : {&bin[0][1], &bin[1][0]}) {
      v += f->value(x);
      if (g.size()) f->grad(x, w, g);
      if (h.size()) f->hess(w, h);
    }
    return v;
  }

  // Readout energy summed over both states.
  double readout_energy(const VectorXd& x) const {
    return bin[0][0].value(x) + bin[0][1].value(x) + bin[1][0].value(x) + bin[1][1].value(x);
  }

  double separation(const VectorXd& x, double eps, double w, Eigen::Ref<VectorXd> g,
                    Eigen::Ref<MatrixXd> h) const {
    return leakage(x, w, g, h) + cross(x, eps, w, g, h);
  }
};

Forms make_forms(const GramMatrices& gm, std::size_t n1, std::size_t n2, double gram_scale,
                 double endpoint_scale) {
  Forms fm;
  fm.l = {static_cast<Index>(n1), static_cast<Index>(n2)};
  const MatrixXcd m[2] = {state_map(fm.l, 0), state_map(fm.l, 1)};
  const MatrixXcd ge = gm.endpoint.adjoint() * gm.endpoint * endpoint_scale;
  const MatrixXcd* bins[2] = {&gm.bin0, &gm.bin1};
  MatrixXcd pw = MatrixXcd::Zero(fm.l.n1 + fm.l.n2, fm.l.n1 + fm.l.n2);
  pw.topLeftCorner(fm.l.n1, fm.l.n1).setIdentity();
  for (int i = 0; i < 2; ++i) {
    for (int b = 0; b < 2; ++b) fm.bin[i][b].q = real_form(m[i], *bins[b] * gram_scale, m[i], false);
    fm.delay[i].q = real_form(m[i], gm.delay * gram_scale, m[i], false);
    fm.endpoint[i].q = real_form(m[i], ge, m[i], false);
    fm.power[i].q = real_form(m[i], 0.5 * pw, m[i], false);
  }
  fm.cross_re.q = real_form(m[0], gm.readout * gram_scale, m[1], false);
  fm.cross_im.q = real_form(m[0], gm.readout * gram_scale, m[1], true);
  return fm;
}

void check_sizes(const ControlProblem& p) {
  const Index n1 = static_cast<Index>(p.n1), nv = n1 + static_cast<Index>(p.n2);
  const GramMatrices& g = p.gram;
  for (const MatrixXcd* m : {&g.delay, &g.bin0, &g.bin1, &g.readout}) {
    if (m->rows() != nv || m->cols() != nv) {
      throw ConfigError("optimizer: Gram matrices do not match n1 = " + std::to_string(p.n1) +
                        ", n2 = " + std::to_string(p.n2));
    }
  }
  if (g.write.rows() != n1 || g.endpoint.size() != nv) {
    throw ConfigError("optimizer: write or endpoint Gram does not match the basis");
  }
}

bool feasible(const SqpResult& r) { return r.max_violation <= 1e-7; }

// Problem rescaled so that coefficients are in units of amp_scale and
// energies in units of a typical write energy.
struct Scaled {
  Forms fm;
  double e_ref = 1.0;
  double power = 1.0;
  double endpoint_fixed = -1.0;  ///< scaled bound, or < 0 for the relative one
  bool has_delay = false;
};

Scaled scale_problem(const ControlProblem& p) {
  check_sizes(p);
  if (!(p.amp_scale > 0.0)) throw ConfigError("optimizer: amp_scale must be positive");
  if (!(p.separation_tolerance > 0.0)) {
    throw ConfigError("optimizer: separation_tolerance must be positive");
  }
  const double k2 = p.amp_scale * p.amp_scale;
  double tr = p.n1 ? p.gram.write.trace().real() / static_cast<double>(p.n1) : 0.0;
  if (!(tr > 0.0)) tr = p.gram.readout.trace().real() / static_cast<double>(p.n1 + p.n2);
  if (!(tr > 0.0)) throw ConfigError("optimizer: basis has no response");
  Scaled s;
  s.e_ref = k2 * tr;
  const double f = k2 / s.e_ref;
  const double len = std::max(p.gram.readout_length, 1e-300);
  s.fm = make_forms(p.gram, p.n1, p.n2, f, f * len);
  s.power = p.p_target > 0.0 ? p.p_target / k2 : 1.0;
  if (p.endpoint_budget > 0.0) s.endpoint_fixed = p.endpoint_budget * len / s.e_ref;
  s.has_delay = p.gram.delay_length > 0.0;
  return s;
}

// Rows shared by both phases. Equalities: bin energies - S, write powers - P.
// Inequalities: delay energies - budget S, endpoint values - bound.
constexpr Index kEq = 4;

void eq_rows(const Scaled& s, const VectorXd& x, double s_val, Eigen::Ref<VectorXd> c,
             Eigen::Ref<MatrixXd> j, Index s_col) {
  const Index nx = s.fm.l.size();
  j.setZero();
  const Form* rows[4] = {&s.fm.bin[0][0], &s.fm.bin[1][1], &s.fm.power[0], &s.fm.power[1]};
  for (Index r = 0; r < 4; ++r) {
    const bool is_bin = r < 2;
    c(r) = rows[r]->value(x) - (is_bin ? s_val : s.power);
    j.row(r).head(nx) = 2.0 * (rows[r]->q * x).transpose();
    if (is_bin && s_col >= 0) j(r, s_col) = -1.0;
  }
}

void eq_hess(const Scaled& s, const VectorXd& lambda, Eigen::Ref<MatrixXd> h) {
  const Form* rows[4] = {&s.fm.bin[0][0], &s.fm.bin[1][1], &s.fm.power[0], &s.fm.power[1]};
  for (Index r = 0; r < 4; ++r) rows[r]->hess(lambda(r), h);
}

// With relative_only, an absolute endpoint bound is replaced by the default
// relative one (used where S is normalized to 1).
std::vector<std::pair<const Form*, double>> in_forms(const Scaled& s, const ControlProblem& p,
                                                     bool relative_only = false) {
  std::vector<std::pair<const Form*, double>> rows;  // (form, S coefficient or -1 for fixed)
  if (s.has_delay) {
    rows.emplace_back(&s.fm.delay[0], p.suppression_budget);
    rows.emplace_back(&s.fm.delay[1], p.suppression_budget);
  }
  const double ec = s.endpoint_fixed >= 0.0 && !relative_only ? -1.0 : 1e-3;
  rows.emplace_back(&s.fm.endpoint[0], ec);
  rows.emplace_back(&s.fm.endpoint[1], ec);
  return rows;
}

void in_rows(const Scaled& s, const std::vector<std::pair<const Form*, double>>& rows,
             const VectorXd& x, double s_val, double relax, Eigen::Ref<VectorXd> c,
             Eigen::Ref<MatrixXd> j) {
  const Index nx = s.fm.l.size();
  j.setZero();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [form, coef] = rows[r];
    const Index i = static_cast<Index>(r);
    c(i) = form->value(x) - relax * (coef >= 0.0 ? coef * s_val : s.endpoint_fixed);
    j.row(i).head(nx) = 2.0 * (form->q * x).transpose();
  }
}

// Phase 1 uses that every term is homogeneous of degree two in the
// coefficients: maximizing S at fixed write power is the same as minimizing
// the write power at S = 1 and rescaling, and the latter has no flat
// direction. Phase 2 minimizes the separation functional at fixed S.
//
// |c| has a kink at c = 0 where optima typically sit. Each phase is first
// solved with Re c = Im c = 0 imposed as equalities; that point is optimal
// for the original problem when the multiplier pair of those rows lies in
// the subdifferential of |c| (norm <= 1, or <= the separation multiplier in
// phase 1). Otherwise an epigraph variable t >= |c| is appended and the
// rows |c|^2 - t^2 <= 0, -t <= 0 are used instead.
struct Phase {
  bool unit_s = false;  // phase 1
  double s_val = 1.0;
  bool zero_cross = true;
  double relax = 1.0;  // multiplies every inequality budget
};

NlpProblem build(const Scaled& s, const ControlProblem& p, const Phase& ph) {
  const Index nx = s.fm.l.size();
  const auto rows = in_forms(s, p, ph.unit_s);
  const double tol = p.separation_tolerance * ph.relax;
  const Index n_eq_base = ph.unit_s ? 3 : 4;
  const Index n_in_head = (ph.unit_s ? 1 : 0) + (ph.zero_cross ? 0 : 2);
  NlpProblem nlp;
  nlp.n = nx + (ph.zero_cross ? 0 : 1);
  nlp.n_eq = n_eq_base + (ph.zero_cross ? 2 : 0);
  nlp.n_in = n_in_head + static_cast<Index>(rows.size());

  nlp.objective = [&s, ph, nx](const VectorXd& y, VectorXd& g) {
    g.setZero();
    const VectorXd x = y.head(nx);
    MatrixXd none;
    if (ph.unit_s) {
      s.fm.power[0].grad(x, 1.0, g.head(nx));
      s.fm.power[1].grad(x, 1.0, g.head(nx));
      return s.fm.power[0].value(x) + s.fm.power[1].value(x);
    }
    double v = s.fm.leakage(x, 1.0, g.head(nx), none);
    if (!ph.zero_cross) {
      g(nx) = 1.0;
      v += y(nx);
    }
    return v;
  };

  nlp.eq = [&s, ph, nx, n_eq_base](const VectorXd& y, VectorXd& c, MatrixXd& j) {
    const VectorXd x = y.head(nx);
    j.setZero();
    if (ph.unit_s) {
      c.head(3) << s.fm.bin[0][0].value(x) - 1.0, s.fm.bin[1][1].value(x) - 1.0,
          s.fm.power[0].value(x) - s.fm.power[1].value(x);
      j.row(0).head(nx) = 2.0 * (s.fm.bin[0][0].q * x).transpose();
      j.row(1).head(nx) = 2.0 * (s.fm.bin[1][1].q * x).transpose();
      j.row(2).head(nx) = 2.0 * ((s.fm.power[0].q - s.fm.power[1].q) * x).transpose();
    } else {
      eq_rows(s, x, ph.s_val, c.head(4), j.topRows(4), -1);
    }
    if (ph.zero_cross) {
      const Form* f[2] = {&s.fm.cross_re, &s.fm.cross_im};
      for (Index r = 0; r < 2; ++r) {
        c(n_eq_base + r) = f[r]->value(x);
        j.row(n_eq_base + r).head(nx) = 2.0 * (f[r]->q * x).transpose();
      }
    }
  };

  nlp.in = [&s, ph, rows, tol, nx, n_in_head](const VectorXd& y, VectorXd& c, MatrixXd& j) {
    const VectorXd x = y.head(nx);
    j.setZero();
    MatrixXd none;
    Index r = 0;
    if (ph.unit_s) {
      VectorXd g = VectorXd::Zero(nx);
      c(r) = s.fm.leakage(x, 1.0, g, none) - tol;
      j.row(r).head(nx) = g.transpose();
      if (!ph.zero_cross) {
        c(r) += y(nx);
        j(r, nx) = 1.0;
      }
      ++r;
    }
    if (!ph.zero_cross) {
      VectorXd g = VectorXd::Zero(nx);
      const double t = y(nx);
      c(r) = s.fm.cross_sq(x, 1.0, g, none) - t * t;
      j.row(r).head(nx) = g.transpose();
      j(r, nx) = -2.0 * t;
      c(r + 1) = -t;
      j(r + 1, nx) = -1.0;
    }
    in_rows(s, rows, x, ph.unit_s ? 1.0 : ph.s_val, ph.relax, c.tail(c.size() - n_in_head),
            j.bottomRows(j.rows() - n_in_head));
  };

  nlp.hessian = [&s, ph, rows, nx, n_eq_base, n_in_head](const VectorXd& y, const VectorXd& lambda,
                                                          const VectorXd& mu, MatrixXd& h) {
    auto hx = h.topLeftCorner(nx, nx);
    const VectorXd x = y.head(nx);
    VectorXd none;
    if (ph.unit_s) {
      s.fm.power[0].hess(1.0 + lambda(2), hx);
      s.fm.power[1].hess(1.0 - lambda(2), hx);
      s.fm.bin[0][0].hess(lambda(0), hx);
      s.fm.bin[1][1].hess(lambda(1), hx);
      s.fm.leakage(x, mu(0), none, hx);
    } else {
      s.fm.leakage(x, 1.0, none, hx);
      eq_hess(s, lambda.head(4), hx);
    }
    if (ph.zero_cross) {
      s.fm.cross_re.hess(lambda(n_eq_base), hx);
      s.fm.cross_im.hess(lambda(n_eq_base + 1), hx);
    } else {
      const double m = mu(ph.unit_s ? 1 : 0);
      s.fm.cross_sq(x, m, none, hx);
      h(nx, nx) -= 2.0 * m;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      rows[r].first->hess(mu(n_in_head + static_cast<Index>(r)), hx);
    }
  };
  return nlp;
}

struct PhaseResult {
  SqpResult sqp;  // x trimmed to the coefficients
  bool ok = false;
};

PhaseResult solve_stage(const Scaled& s, const ControlProblem& p, Phase ph, const VectorXd& x0,
                        const SqpOptions& opt) {
  const Index nx = s.fm.l.size();
  ph.zero_cross = true;
  PhaseResult out;
  out.sqp = sqp_minimize(build(s, p, ph), x0, opt);
  out.ok = feasible(out.sqp);
  if (out.ok) {
    const Index n_eq_base = ph.unit_s ? 3 : 4;
    const double lam = std::hypot(out.sqp.lambda_eq(n_eq_base), out.sqp.lambda_eq(n_eq_base + 1));
    const double bound = ph.unit_s ? out.sqp.mu_in(0) : 1.0;
    if (lam <= bound * (1.0 + 1e-6) + 1e-9) return out;
  }
  ph.zero_cross = false;
  VectorXd y(nx + 1);
  VectorXd none;
  MatrixXd none_h;
  const VectorXd start = out.ok ? VectorXd(out.sqp.x) : x0;
  y << start, std::sqrt(s.fm.cross_sq(start, 0.0, none, none_h));
  PhaseResult alt;
  alt.sqp = sqp_minimize(build(s, p, ph), y, opt);
  alt.sqp.x = alt.sqp.x.head(nx).eval();
  alt.ok = feasible(alt.sqp);
  alt.sqp.iterations += out.sqp.iterations;
  if (alt.ok && (!out.ok || alt.sqp.f <= out.sqp.f)) return alt;
  return out;
}

// Budget factor that makes x feasible for every inequality of the phase.
double required_relax(const Scaled& s, const ControlProblem& p, const Phase& ph, const VectorXd& x) {
  VectorXd none;
  MatrixXd none_h;
  double r = 1.0;
  if (ph.unit_s) {
    r = std::max(r, s.fm.separation(x, 0.0, 0.0, none, none_h) / p.separation_tolerance);
  }
  const double s_val = ph.unit_s ? 1.0 : ph.s_val;
  for (const auto& [form, coef] : in_forms(s, p, ph.unit_s)) {
    const double bound = coef >= 0.0 ? coef * s_val : s.endpoint_fixed;
    if (bound > 0.0) r = std::max(r, form->value(x) / bound);
  }
  return r;
}

// Starting points far outside the budgets make the linearized constraints
// inconsistent, so the budgets are relaxed to the starting point and then
// tightened tenfold per stage, each stage warm-started from the last.
PhaseResult solve_phase(const Scaled& s, const ControlProblem& p, Phase ph, const VectorXd& x0,
                        const SqpOptions& opt) {
  ph.relax = required_relax(s, p, ph, x0);
  ph.relax = ph.relax > 1.0 ? 2.0 * ph.relax : 1.0;
  VectorXd x = x0;
  int iterations = 0;
  for (;;) {
    // Relaxed stages only provide warm starts, so they get a short budget.
    SqpOptions stage_opt = opt;
    if (ph.relax > 1.0) stage_opt.max_iterations = std::min(opt.max_iterations, 200);
    PhaseResult r = solve_stage(s, p, ph, x, stage_opt);
    iterations += r.sqp.iterations;
    r.sqp.iterations = iterations;
    if (ph.relax == 1.0 || !r.sqp.x.allFinite()) return r;
    x = r.sqp.x;
    ph.relax = std::max(1.0, 0.1 * ph.relax);
  }
}

// Random write coefficients at the target power and a random readout whose
// response carries about 10% of the energy of the stored response.
VectorXd initial_point(const Scaled& s, std::uint64_t seed) {
  const Layout& l = s.fm.l;
  VectorXd x(l.size());
  std::uint32_t k = 0;
  for (Index i = 0; i < x.size(); i += 2, ++k) {
    const auto [a, b] = normal_pair(seed, k, 0, 0);
    x(i) = a;
    if (i + 1 < x.size()) x(i + 1) = b;
  }
  for (int i = 0; i < 2; ++i) {
    const double pw = s.fm.power[i].value(x);
    x.segment(l.re_xi(i), 2 * l.n1) *= std::sqrt(s.power / pw);
  }
  VectorXd mem = x, read = VectorXd::Zero(x.size());
  mem.segment(l.re_zeta(), 2 * l.n2).setZero();
  read.segment(l.re_zeta(), 2 * l.n2) = x.segment(l.re_zeta(), 2 * l.n2);
  const double e_mem = s.fm.readout_energy(mem), e_read = s.fm.readout_energy(read);
  const double f = e_read > 0.0 && e_mem > 0.0 ? std::sqrt(0.1 * e_mem / e_read) : 0.1;
  x.segment(l.re_zeta(), 2 * l.n2) *= f;
  return x;
}

}  // namespace

ControlProblem make_problem(const BasisSet& basis, double amp_scale) {
  ControlProblem p;
  p.gram = gram(basis);
  p.n1 = basis.n1();
  p.n2 = basis.n2();
  p.amp_scale = amp_scale;
  return p;
}

VectorXd pack(const ControlCoefficients& c) {
  const Layout l{static_cast<Index>(c.xi0.size()), static_cast<Index>(c.zeta.size())};
  if (c.xi1.size() != c.xi0.size()) throw ConfigError("pack: xi0 and xi1 differ in length");
  VectorXd x(l.size());
  for (Index k = 0; k < l.n1; ++k) {
    x(l.re_xi(0) + k) = c.xi0[k].real();
    x(l.im_xi(0) + k) = c.xi0[k].imag();
    x(l.re_xi(1) + k) = c.xi1[k].real();
    x(l.im_xi(1) + k) = c.xi1[k].imag();
  }
  for (Index k = 0; k < l.n2; ++k) {
    x(l.re_zeta() + k) = c.zeta[k].real();
    x(l.im_zeta() + k) = c.zeta[k].imag();
  }
  return x;
}

ControlCoefficients unpack(const VectorXd& x, std::size_t n1, std::size_t n2) {
  const Layout l{static_cast<Index>(n1), static_cast<Index>(n2)};
  if (x.size() != l.size()) throw ConfigError("unpack: vector length does not match n1, n2");
  ControlCoefficients c;
  c.xi0.resize(n1);
  c.xi1.resize(n1);
  c.zeta.resize(n2);
  for (Index k = 0; k < l.n1; ++k) {
    c.xi0[k] = cplx(x(l.re_xi(0) + k), x(l.im_xi(0) + k));
    c.xi1[k] = cplx(x(l.re_xi(1) + k), x(l.im_xi(1) + k));
  }
  for (Index k = 0; k < l.n2; ++k) c.zeta[k] = cplx(x(l.re_zeta() + k), x(l.im_zeta() + k));
  return c;
}

std::pair<double, VectorXd> objective(const ControlProblem& p, const ControlCoefficients& c,
                                      double s_value) {
  check_sizes(p);
  const Forms fm = make_forms(p.gram, p.n1, p.n2, 1.0, 1.0);
  const VectorXd x = pack(c);
  if (x.size() != fm.l.size()) throw ConfigError("objective: coefficients do not match the problem");
  VectorXd g = VectorXd::Zero(x.size());
  MatrixXd none;
  const double f = fm.separation(x, 1e-12 * s_value, 1.0, g, none);
  return {f, g};
}

double ConstraintResiduals::max_violation() const {
  double v = 0.0;
  for (const auto& [name, r] : equalities) v = std::max(v, std::abs(r));
  for (const auto& [name, r] : inequalities) v = std::max(v, r);
  return v;
}

ConstraintResiduals constraints(const ControlProblem& p, const ControlCoefficients& c,
                                double s_value) {
  check_sizes(p);
  const Forms fm = make_forms(p.gram, p.n1, p.n2, 1.0, 1.0);
  const VectorXd x = pack(c);
  if (x.size() != fm.l.size()) throw ConfigError("constraints: coefficients do not match the problem");
  ConstraintResiduals r;
  const double p_target = p.p_target > 0.0 ? p.p_target : p.amp_scale * p.amp_scale;
  r.equalities.emplace_back("bin0_energy", fm.bin[0][0].value(x) - s_value);
  r.equalities.emplace_back("bin1_energy", fm.bin[1][1].value(x) - s_value);
  r.equalities.emplace_back("write_power0", fm.power[0].value(x) - p_target);
  r.equalities.emplace_back("write_power1", fm.power[1].value(x) - p_target);
  if (p.gram.delay_length > 0.0) {
    r.inequalities.emplace_back("delay_energy0", fm.delay[0].value(x) - p.suppression_budget * s_value);
    r.inequalities.emplace_back("delay_energy1", fm.delay[1].value(x) - p.suppression_budget * s_value);
  }
  const double bound = p.endpoint_budget > 0.0
                           ? p.endpoint_budget
                           : 1e-3 * s_value / std::max(p.gram.readout_length, 1e-300);
  r.inequalities.emplace_back("endpoint0", fm.endpoint[0].value(x) - bound);
  r.inequalities.emplace_back("endpoint1", fm.endpoint[1].value(x) - bound);
  return r;
}

ControlMetrics control_metrics(const ControlProblem& p, const ControlCoefficients& c) {
  check_sizes(p);
  if (c.xi0.size() != p.n1 || c.xi1.size() != p.n1 || c.zeta.size() != p.n2) {
    throw ConfigError("metrics: coefficients do not match the problem");
  }
  ControlMetrics m;
  const VectorXcd v[2] = {stack_coefficients(c.xi0, c.zeta), stack_coefficients(c.xi1, c.zeta)};
  const MatrixXcd* bins[2] = {&p.gram.bin0, &p.gram.bin1};
  const Index n1 = static_cast<Index>(p.n1);
  for (int i = 0; i < 2; ++i) {
    for (int b = 0; b < 2; ++b) m.bin_energy[i][b] = v[i].dot(*bins[b] * v[i]).real();
    m.readout_energy[i] = v[i].dot(p.gram.readout * v[i]).real();
    const VectorXcd xi = v[i].head(n1);
    m.write_energy[i] = xi.dot(p.gram.write * xi).real();
    m.efficiency[i] = m.write_energy[i] > 0.0 ? m.readout_energy[i] / m.write_energy[i] : 0.0;
  }
  const double denom = std::sqrt(m.readout_energy[0] * m.readout_energy[1]);
  m.cross_overlap = denom > 0.0 ? std::abs(v[0].dot(p.gram.readout * v[1])) / denom : 0.0;
  m.power_ratio = normalized_power(c.xi0) > 0.0 ? power_ratio(c.zeta, c.xi0) : 0.0;
  return m;
}

namespace {

ControlSolution finish(const ControlProblem& p, const Scaled& s, const VectorXd& y, double s_scaled,
                       bool converged, int iterations, int best) {
  const VectorXd x = y.head(s.fm.l.size());
  ControlSolution sol;
  sol.coeffs = unpack(x * p.amp_scale, p.n1, p.n2);
  sol.s_target = s_scaled * s.e_ref;
  VectorXd none_g;
  MatrixXd none_h;
  sol.objective_value = s.fm.separation(x, 1e-12 * s_scaled, 1.0, none_g, none_h) * s.e_ref;
  sol.converged = converged;
  sol.iterations = iterations;
  sol.best_restart = best;
  sol.residuals = constraints(p, sol.coeffs, sol.s_target);
  sol.metrics = control_metrics(p, sol.coeffs);
  return sol;
}

int least_violation(const std::vector<PhaseResult>& runs) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].sqp.max_violation < runs[best].sqp.max_violation) best = r;
  }
  return static_cast<int>(best);
}

// Residuals are reported relative to S (energies) and to the write power.
[[noreturn]] void report_infeasible(const ControlProblem& p, const Scaled& s, const VectorXd& x,
                                    double s_scaled, const std::string& what) {
  const ControlSolution sol = finish(p, s, x, s_scaled, false, 0, -1);
  const double p_target = p.p_target > 0.0 ? p.p_target : p.amp_scale * p.amp_scale;
  const double e_scale = sol.s_target > 0.0 ? sol.s_target : 1.0;
  std::ostringstream msg;
  msg << "optimizer: " << what << "; best relative residuals:";
  msg.precision(4);
  for (const auto& [name, r] : sol.residuals.equalities) {
    msg << ' ' << name << '=' << r / (name.starts_with("write") ? p_target : e_scale);
  }
  for (const auto& [name, r] : sol.residuals.inequalities) msg << ' ' << name << '=' << r / e_scale;
  throw InfeasibleError(msg.str());
}

}  // namespace

ControlSolution optimize(const ControlProblem& p, const OptimizerOptions& opt) {
  if (opt.restarts < 1) throw ConfigError("optimizer: restarts must be at least 1");
  const Scaled s = scale_problem(p);
  const auto n_restarts = static_cast<std::size_t>(opt.restarts);
  std::vector<PhaseResult> runs(n_restarts);

  if (p.gram.bin0.norm() == 0.0 || p.gram.bin1.norm() == 0.0) {
    // A bin that no response reaches forces S = 0; only the trivial readout fits.
    VectorXd x = initial_point(s, mix_seed(opt.seed));
    x.segment(s.fm.l.re_zeta(), 2 * s.fm.l.n2).setZero();
    return finish(p, s, x, 0.0, true, 0, 0);
  }

  auto pick = [&](const std::vector<PhaseResult>& runs) {
    int best = -1;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      if (!runs[r].ok) continue;
      if (best < 0 || runs[r].sqp.f < runs[static_cast<std::size_t>(best)].sqp.f) best = static_cast<int>(r);
    }
    return best;
  };

  if (p.s_target > 0.0) {
    const double s_scaled = p.s_target / s.e_ref;
    parallel_for(n_restarts, [&](std::size_t r) {
      runs[r] = solve_phase(s, p, {false, s_scaled, true}, initial_point(s, mix_seed(opt.seed + r)),
                            opt.sqp);
    });
    const int best = pick(runs);
    if (best < 0) {
      const auto& w = runs[static_cast<std::size_t>(least_violation(runs))].sqp;
      report_infeasible(p, s, w.x, s_scaled,
                        "no restart satisfied the constraints at S = " + std::to_string(p.s_target));
    }
    const SqpResult& b = runs[static_cast<std::size_t>(best)].sqp;
    return finish(p, s, b.x, s_scaled, b.converged, b.iterations, best);
  }

  parallel_for(n_restarts, [&](std::size_t r) {
    VectorXd x = initial_point(s, mix_seed(opt.seed + r));
    const double e = 0.5 * (s.fm.bin[0][0].value(x) + s.fm.bin[1][1].value(x));
    if (e > 0.0) x /= std::sqrt(e);
    runs[r] = solve_phase(s, p, {true, 1.0, true}, x, opt.sqp);
  });
  // Smallest write power at unit S is the largest S at the target power.
  const int best = pick(runs);
  if (best < 0) {
    const auto& w = runs[static_cast<std::size_t>(least_violation(runs))].sqp;
    const double sw = w.f > 0.0 ? s.power / (0.5 * w.f) : 0.0;
    report_infeasible(p, s, w.x * std::sqrt(sw), sw, "no restart reached a feasible readout energy");
  }
  const SqpResult& b = runs[static_cast<std::size_t>(best)].sqp;
  const double s_scaled = s.power / (0.5 * b.f);
  VectorXd x = b.x * std::sqrt(s_scaled);
  if (!(s_scaled > 1e-14)) {
    // Nothing can be read out within the tolerances: the trivial readout is optimal.
    x.segment(s.fm.l.re_zeta(), 2 * s.fm.l.n2).setZero();
    return finish(p, s, x, 0.0, true, b.iterations, best);
  }
  // Polish at the attained energy; keep the phase-1 point if that does not help.
  const PhaseResult polished = solve_phase(s, p, {false, s_scaled, true}, x, opt.sqp);
  const int iters = b.iterations + polished.sqp.iterations;
  VectorXd none;
  MatrixXd none_h;
  const double eps = 1e-12 * s_scaled;
  if (polished.ok && s.fm.separation(polished.sqp.x, eps, 0.0, none, none_h) <=
                         s.fm.separation(x, eps, 0.0, none, none_h)) {
    return finish(p, s, polished.sqp.x, s_scaled, polished.sqp.converged, iters, best);
  }
  return finish(p, s, x, s_scaled, b.converged, iters, best);
}

}  // namespace spinmem

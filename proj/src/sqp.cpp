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

#include "spinmem/sqp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace spinmem {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr Index kMaxEnumerated = 20;

struct Eval {
  double f = 0.0;
  VectorXd g;
  VectorXd ce, ci;
  MatrixXd je, ji;
};

Eval evaluate(const NlpProblem& p, const VectorXd& x) {
  Eval e;
  e.g.resize(p.n);
  e.f = p.objective(x, e.g);
  e.ce.resize(p.n_eq);
  e.je.resize(p.n_eq, p.n);
  if (p.n_eq > 0) p.eq(x, e.ce, e.je);
  e.ci.resize(p.n_in);
  e.ji.resize(p.n_in, p.n);
  if (p.n_in > 0) p.in(x, e.ci, e.ji);
  return e;
}

double violation_l1(const Eval& e) {
  return e.ce.lpNorm<1>() + e.ci.cwiseMax(0.0).sum();
}

double violation_inf(const Eval& e) {
  double v = e.ce.size() ? e.ce.lpNorm<Eigen::Infinity>() : 0.0;
  if (e.ci.size()) v = std::max(v, e.ci.maxCoeff());
  return std::max(v, 0.0);
}

bool all_finite(const Eval& e) {
  return std::isfinite(e.f) && e.g.allFinite() && e.ce.allFinite() && e.ci.allFinite() &&
         e.je.allFinite() && e.ji.allFinite();
}

VectorXd lagrangian_grad(const Eval& e, const VectorXd& lambda, const VectorXd& mu) {
  VectorXd r = e.g;
  if (lambda.size()) r += e.je.transpose() * lambda;
  if (mu.size()) r += e.ji.transpose() * mu;
  return r;
}

// Symmetric matrix with eigenvalues replaced by max(|e|, floor).
MatrixXd positive_definite(const MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  VectorXd ev = es.eigenvalues().cwiseAbs();
  const double floor = 1e-8 * std::max(1.0, ev.maxCoeff());
  ev = ev.cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

bool solve_qp(const MatrixXd& h, const VectorXd& g, const MatrixXd& a, const VectorXd& av,
              const MatrixXd& c, const VectorXd& cv, VectorXd& d, VectorXd& lambda,
              VectorXd& mu) {
  const Index n = h.rows(), me = a.rows(), mi = c.rows();
  if (mi > kMaxEnumerated) return false;
  Eigen::LLT<MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) return false;
  MatrixXd w(me + mi, n);
  w << a, c;
  VectorXd wv(me + mi);
  wv << av, cv;
  const VectorXd hg = llt.solve(g);
  const MatrixXd hw = llt.solve(w.transpose());
  const MatrixXd m = w * hw;
  const VectorXd r = wv - w * hg;
  const double tol = 1e-9 * std::max(1.0, g.lpNorm<Eigen::Infinity>());

  // Subsets in order of increasing size; the first KKT point is the unique optimum.
  std::vector<std::uint32_t> subsets;
  subsets.reserve(std::size_t{1} << mi);
  for (std::uint32_t s = 0; s < (std::uint32_t{1} << mi); ++s) subsets.push_back(s);
  std::stable_sort(subsets.begin(), subsets.end(), [](std::uint32_t x, std::uint32_t y) {
    return std::popcount(x) < std::popcount(y);
  });
  for (std::uint32_t s : subsets) {
    std::vector<Index> rows;
    for (Index i = 0; i < me; ++i) rows.push_back(i);
    for (Index j = 0; j < mi; ++j) {
      if (s & (std::uint32_t{1} << j)) rows.push_back(me + j);
    }
    const Index k = static_cast<Index>(rows.size());
    VectorXd nu = VectorXd::Zero(k);
    if (k > 0) {
      MatrixXd ms(k, k);
      VectorXd rs(k);
      for (Index i = 0; i < k; ++i) {
        rs(i) = r(rows[i]);
        for (Index j = 0; j < k; ++j) ms(i, j) = m(rows[i], rows[j]);
      }
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(ms);
      nu = cod.solve(rs);
      if ((ms * nu - rs).lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + rs.lpNorm<Eigen::Infinity>())) {
        continue;  // linearized constraints inconsistent on this set
      }
    }
    VectorXd step = -hg;
    for (Index i = 0; i < k; ++i) step -= hw.col(rows[i]) * nu(i);
    bool ok = true;
    VectorXd mus = VectorXd::Zero(mi);
    for (Index i = 0; i < k && ok; ++i) {
      if (rows[i] >= me) {
        mus(rows[i] - me) = nu(i);
        if (nu(i) < -tol) ok = false;
      }
    }
    for (Index j = 0; j < mi && ok; ++j) {
      if (!(s & (std::uint32_t{1} << j)) && c.row(j).dot(step) + cv(j) > tol) ok = false;
    }
    if (!ok) continue;
    d = step;
    lambda = nu.head(me);
    mu = mus.cwiseMax(0.0);
    return true;
  }
  return false;
}

SqpResult sqp_minimize(const NlpProblem& p, const VectorXd& x0, const SqpOptions& opt) {
  SqpResult res;
  VectorXd x = x0;
  Eval e = evaluate(p, x);
  MatrixXd b = MatrixXd::Identity(p.n, p.n);
  VectorXd lambda = VectorXd::Zero(p.n_eq), mu = VectorXd::Zero(p.n_in);
  double rho = 1.0;
  int stalls = 0;
  int tiny_steps = 0;

  auto finish = [&](bool converged, int it, double kkt) {
    res.x = x;
    res.f = e.f;
    res.lambda_eq = lambda;
    res.mu_in = mu;
    res.kkt_residual = kkt;
    res.max_violation = violation_inf(e);
    res.iterations = it;
    res.converged = converged;
    return res;
  };
  if (!all_finite(e)) return finish(false, 0, std::numeric_limits<double>::infinity());

  const bool exact = static_cast<bool>(p.hessian);
  MatrixXd h;
  double shift = 0.0;  // extra regularization after failed exact-Hessian steps
  auto regularize = [&] {
    if (exact) {
      shift = shift > 0.0 ? 10.0 * shift : 1e-3 * std::max(1.0, b.diagonal().cwiseAbs().maxCoeff());
    } else {
      b = MatrixXd::Identity(p.n, p.n);
    }
  };
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (exact) {
      h.setZero(p.n, p.n);
      p.hessian(x, lambda, mu, h);
      b = positive_definite(h);
      b.diagonal().array() += shift;
    }
    VectorXd d, lq, mq;
    double theta = 1.0;
    bool solved = false;
    for (double th : {1.0, 0.5, 0.25, 0.1, 0.01, 0.0}) {
      VectorXd civ = e.ci;
      for (Index j = 0; j < civ.size(); ++j) {
        if (civ(j) > 0.0) civ(j) *= th;
      }
      if (solve_qp(b, e.g, e.je, th * e.ce, e.ji, civ, d, lq, mq)) {
        theta = th;
        solved = true;
        break;
      }
    }
    if (!solved) {
      regularize();
      if (++stalls > 3) return finish(false, it, std::numeric_limits<double>::infinity());
      continue;
    }

    // KKT residual at x with the subproblem multipliers.
    const VectorXd gl = lagrangian_grad(e, lq, mq);
    double comp = 0.0;
    for (Index j = 0; j < mq.size(); ++j) comp = std::max(comp, std::abs(mq(j) * e.ci(j)));
    const double kkt = std::max({gl.lpNorm<Eigen::Infinity>(), violation_inf(e), comp});
    lambda = lq;
    mu = mq;
    double scale = std::max(1.0, e.g.lpNorm<Eigen::Infinity>());
    for (Index i = 0; i < p.n_eq; ++i) {
      scale = std::max(scale, std::abs(lq(i)) * e.je.row(i).lpNorm<Eigen::Infinity>());
    }
    for (Index j = 0; j < p.n_in; ++j) {
      scale = std::max(scale, mq(j) * e.ji.row(j).lpNorm<Eigen::Infinity>());
    }
    if (kkt < opt.kkt_tol * scale && violation_inf(e) < opt.feasibility_tol) {
      return finish(true, it, kkt);
    }

    const double mult = std::max(lq.size() ? lq.lpNorm<Eigen::Infinity>() : 0.0,
                                 mq.size() ? mq.lpNorm<Eigen::Infinity>() : 0.0);
    rho = std::max(rho, 1.5 * mult + 1e-6);
    const double phi0 = e.f + rho * violation_l1(e);
    double slope = e.g.dot(d) - rho * theta * violation_l1(e);
    if (slope > 0.0) slope = -d.dot(b * d);

    double alpha = 1.0;
    bool accepted = false;
    Eval trial;
    VectorXd xt;
    for (int ls = 0; ls < 40; ++ls) {
      xt = x + alpha * d;
      trial = evaluate(p, xt);
      if (all_finite(trial) &&
          trial.f + rho * violation_l1(trial) <= phi0 + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      if (ls == 0 && all_finite(trial)) {
        // Second-order correction against the curvature of the constraints.
        std::vector<Index> act_i;
        for (Index j = 0; j < p.n_in; ++j) {
          if (mq(j) > 0.0 || e.ci(j) + e.ji.row(j).dot(d) > -1e-12) act_i.push_back(j);
        }
        const Index k = p.n_eq + static_cast<Index>(act_i.size());
        if (k > 0) {
          MatrixXd w(k, p.n);
          VectorXd cw(k);
          w.topRows(p.n_eq) = e.je;
          cw.head(p.n_eq) = trial.ce;
          for (std::size_t i = 0; i < act_i.size(); ++i) {
            w.row(p.n_eq + static_cast<Index>(i)) = e.ji.row(act_i[i]);
            cw(p.n_eq + static_cast<Index>(i)) = trial.ci(act_i[i]);
          }
          const VectorXd corr = -w.completeOrthogonalDecomposition().solve(cw);
          const VectorXd xs = x + d + corr;
          Eval soc = evaluate(p, xs);
          if (all_finite(soc) && soc.f + rho * violation_l1(soc) <= phi0 + 1e-4 * slope) {
            xt = xs;
            trial = std::move(soc);
            accepted = true;
            break;
          }
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      regularize();
      if (++stalls > 5) return finish(false, it, kkt);
      continue;
    }
    stalls = 0;
    // Steps at rounding level: accept a looser stationarity test and stop.
    if (alpha * d.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) {
      if (++tiny_steps >= 10) {
        x = xt;
        e = std::move(trial);
        return finish(kkt < std::sqrt(opt.kkt_tol) * scale && violation_inf(e) < opt.feasibility_tol,
                      it + 1, kkt);
      }
    } else {
      tiny_steps = 0;
    }
    if (exact) {
      shift = 0.1 * shift < 1e-12 ? 0.0 : 0.1 * shift;
      x = xt;
      e = std::move(trial);
      continue;
    }

    // Damped BFGS on the Lagrangian gradient.
    const VectorXd s = xt - x;
    const VectorXd y = lagrangian_grad(trial, lq, mq) - gl;
    const VectorXd bs = b * s;
    const double sbs = s.dot(bs);
    double sy = s.dot(y);
    if (sbs > 1e-300) {
      VectorXd yd = y;
      if (sy < 0.2 * sbs) {
        const double t = 0.8 * sbs / (sbs - sy);
        yd = t * y + (1.0 - t) * bs;
        sy = s.dot(yd);
      }
      if (sy > 1e-300) b += yd * yd.transpose() / sy - bs * bs.transpose() / sbs;
    }
    x = xt;
    e = std::move(trial);
  }
  const VectorXd gl = lagrangian_grad(e, lambda, mu);
  return finish(false, opt.max_iterations,
                std::max(gl.lpNorm<Eigen::Infinity>(), violation_inf(e)));
}

}  // namespace spinmem

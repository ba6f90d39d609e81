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

#include "spinmem/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

#include "spinmem/errors.hpp"
#include "spinmem/parallel.hpp"
#include "spinmem/rng.hpp"

namespace spinmem {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

cplx draw(const NoiseSpec& spec, std::uint32_t step, std::uint32_t realization,
          std::uint32_t point) {
  const auto [a, b] = normal_pair(spec.seed, step, realization, point, 0);
  if (spec.kind == NoiseKind::real_only) return {a, 0.0};
  return {a * kInvSqrt2, b * kInvSqrt2};
}

std::uint32_t counter(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError(std::string("noise: ") + what + " exceeds the counter range");
  }
  return static_cast<std::uint32_t>(v);
}

// Sample means and standard errors of the realization shifts, summed in
// realization order.
void reduce(const std::vector<std::array<cplx, 2>>& s, double scale, NoiseStudyResult& out,
            cplx base_alpha, cplx base_beta) {
  const double n = static_cast<double>(s.size());
  cplx mean[2] = {0.0, 0.0};
  for (const auto& v : s) {
    mean[0] += v[0];
    mean[1] += v[1];
  }
  mean[0] /= n;
  mean[1] /= n;
  double var[2] = {0.0, 0.0};
  for (const auto& v : s) {
    var[0] += std::norm(v[0] - mean[0]);
    var[1] += std::norm(v[1] - mean[1]);
  }
  const double denom = s.size() > 1 ? n - 1.0 : 1.0;
  out.mean_alpha = base_alpha + scale * mean[0];
  out.mean_beta = base_beta + scale * mean[1];
  out.std_err_alpha = scale * std::sqrt(var[0] / denom / n);
  out.std_err_beta = scale * std::sqrt(var[1] / denom / n);
}

}  // namespace

void validate(const NoiseSpec& spec) {
  if (!(spec.delta_eta >= 0.0) || !std::isfinite(spec.delta_eta)) {
    throw ConfigError("noise: delta_eta must be finite and non-negative");
  }
  if (spec.n_realizations < 1) throw ConfigError("noise: n_realizations must be at least 1");
}

std::vector<cplx> unit_noise(const NoiseSpec& spec, std::size_t n_samples, std::size_t last,
                             std::uint32_t realization, std::uint32_t point) {
  std::vector<cplx> u(n_samples, 0.0);
  const std::size_t stop = std::min(last + 1, n_samples);
  for (std::size_t m = 1; m < stop; ++m) {
    u[m] = draw(spec, counter(m - 1, "step"), realization, point);
  }
  return u;
}

std::vector<SectionDrive> protocol_sections(const BasisSet& basis, std::span<const cplx> xi,
                                            std::span<const cplx> zeta) {
  const GridLayout& g = basis.grid;
  std::vector<SectionDrive> s(2);
  s[0] = {0, g.i2, sample_pulse(basis.write_pulse(xi), g.time(0), g.dt, g.i2 + 1)};
  s[1] = {g.i2, g.i3, sample_pulse(basis.read_pulse(zeta), g.time(g.i2), g.dt, g.i3 - g.i2 + 1)};
  return s;
}

std::size_t noise_window_end(const GridLayout& grid, NoiseWindow window) {
  return window == NoiseWindow::write_only ? grid.i2 : grid.i3;
}

Trajectory solve_noisy(const Ensemble& ens, const KernelTable& kernel,
                       std::span<const SectionDrive> sections, std::size_t window_end,
                       const NoiseSpec& spec, std::uint32_t realization, std::uint32_t point) {
  validate(spec);
  if (sections.empty()) throw ConfigError("solve_noisy: no sections");
  const std::size_t total = sections.back().end + 1;
  const double t0 = 0.0;
  if (spec.delta_eta == 0.0) return propagate_sections(ens, kernel, t0, sections).full;
  std::vector<cplx> kicks = unit_noise(spec, total, window_end, realization, point);
  const double scale = std::sqrt(kernel.dt) * spec.delta_eta;
  for (auto& k : kicks) k *= scale;
  return propagate_sections(ens, kernel, t0, sections, kicks).full;
}

NoiseHarness::NoiseHarness(const Ensemble& ens, const KernelTable& kernel, const BasisSet& basis,
                           const ControlCoefficients& coeffs)
    : basis_(&basis), coeffs_(coeffs), gram_(gram(basis)) {
  const GridLayout& g = basis.grid;
  mats_ = retrieval_matrices(gram_, coeffs_);
  dt_ = g.dt;
  n_samples_ = g.i3 + 1;
  window_end_[0] = noise_window_end(g, NoiseWindow::all_sections);
  window_end_[1] = noise_window_end(g, NoiseWindow::write_only);
  if (kernel.steps() < g.i3) throw ConfigError("noise: kernel table shorter than the protocol");
  if (std::abs(kernel.dt - g.dt) > 1e-12 * g.dt) throw ConfigError("noise: kernel and grid steps differ");

  // Response to a unit kick at sample 1. The equation is a convolution on
  // the uniform grid, so a kick at any m >= 1 produces the same response
  // shifted by m - 1. (Sample 0 is special: no ramp precedes it.)
  std::vector<cplx> unit(n_samples_, 0.0);
  unit[1] = 1.0;
  const Trajectory h1 = solve_volterra(kernel, impulse_term(ens.params, unit, g.dt), {});
  const std::span<const cplx> h(h1.samples.data() + 1, n_samples_ - 1);

  const Trajectory r0 = assemble_read(coeffs_.zeta, coeffs_.xi0, basis);
  const Trajectory r1 = assemble_read(coeffs_.zeta, coeffs_.xi1, basis);
  const std::size_t ia = g.ia, ic = g.ic, off = g.i2;
  // c_i[m] = int h(t - t_m) conj(A_i(t)) dt over [tau_a, tau_c], trapezoidal.
  std::vector<cplx> c[2] = {std::vector<cplx>(n_samples_, 0.0), std::vector<cplx>(n_samples_, 0.0)};
  std::vector<cplx> w0(ic - ia + 1), w1(ic - ia + 1);
  for (std::size_t n = ia; n <= ic; ++n) {
    const double w = (n == ia || n == ic) ? 0.5 * dt_ : dt_;
    w0[n - ia] = w * std::conj(r0.samples[n - off]);
    w1[n - ia] = w * std::conj(r1.samples[n - off]);
  }
  parallel_for(ic + 1, [&](std::size_t m) {
    if (m == 0) return;
    cplx s0 = 0.0, s1 = 0.0;
    for (std::size_t n = std::max(ia, m); n <= ic; ++n) {
      const cplx hv = h[n - m];
      s0 += hv * w0[n - ia];
      s1 += hv * w1[n - ia];
    }
    c[0][m] = s0;
    c[1][m] = s1;
  });
  const auto& f = mats_.f;
  const cplx det = f(0, 0) * f(1, 1) - f(0, 1) * f(1, 0);
  if (det == 0.0) throw RetrievalDegeneracyError("noise: retrieval matrix is singular");
  gain_[0].assign(n_samples_, 0.0);
  gain_[1].assign(n_samples_, 0.0);
  for (std::size_t m = 0; m < n_samples_; ++m) {
    gain_[0][m] = (c[0][m] * f(1, 1) - f(0, 1) * c[1][m]) / det;
    gain_[1][m] = (f(0, 0) * c[1][m] - f(1, 0) * c[0][m]) / det;
  }
}

RetrievalResult NoiseHarness::noiseless(const Superposition& sup) const {
  const Eigen::VectorXcd v = stack_coefficients(encode(sup, coeffs_), coeffs_.zeta);
  return retrieve(overlaps(gram_, coeffs_, v), mats_, sup);
}

std::array<cplx, 2> NoiseHarness::unit_shift(const NoiseSpec& spec, std::uint32_t realization,
                                             std::uint32_t point) const {
  const std::size_t last =
      std::min(window_end_[spec.window == NoiseWindow::write_only ? 1 : 0], n_samples_ - 1);
  cplx a = 0.0, b = 0.0;
  for (std::size_t m = 1; m <= last; ++m) {
    const cplx u = draw(spec, static_cast<std::uint32_t>(m - 1), realization, point);
    a += gain_[0][m] * u;
    b += gain_[1][m] * u;
  }
  const double s = std::sqrt(dt_);
  return {s * a, s * b};
}

NoiseStudyResult NoiseHarness::run(const Superposition& sup, const NoiseSpec& spec,
                                   std::uint32_t point, bool keep_samples) const {
  validate(spec);
  counter(n_samples_, "grid size");
  const RetrievalResult det = noiseless(sup);
  NoiseStudyResult out;
  if (spec.delta_eta == 0.0) {
    out.mean_alpha = det.alpha_r;
    out.mean_beta = det.beta_r;
    if (keep_samples) out.samples.assign(spec.n_realizations, {det.alpha_r, det.beta_r});
  } else {
    const std::uint32_t n = counter(spec.n_realizations, "realization count");
    std::vector<std::array<cplx, 2>> shifts(n);
    for (std::uint32_t r = 0; r < n; ++r) shifts[r] = unit_shift(spec, r, point);
    reduce(shifts, spec.delta_eta, out, det.alpha_r, det.beta_r);
    if (keep_samples) {
      out.samples.resize(n);
      for (std::uint32_t r = 0; r < n; ++r) {
        out.samples[r] = {det.alpha_r + spec.delta_eta * shifts[r][0],
                          det.beta_r + spec.delta_eta * shifts[r][1]};
      }
    }
  }
  out.eps_alpha = std::abs(sup.alpha - out.mean_alpha);
  out.eps_beta = std::abs(sup.beta - out.mean_beta);
  return out;
}

NoiseStudyResult monte_carlo_direct(const Ensemble& ens, const KernelTable& kernel,
                                    const BasisSet& basis, const ControlCoefficients& coeffs,
                                    const Superposition& sup, const NoiseSpec& spec,
                                    std::uint32_t point) {
  validate(spec);
  const GridLayout& g = basis.grid;
  const auto sections = protocol_sections(basis, encode(sup, coeffs), coeffs.zeta);
  // Readout-section responses placed on the global index range.
  auto global = [&](std::span<const cplx> zeta, std::span<const cplx> xi) {
    std::vector<cplx> out(g.i3 + 1, 0.0);
    const Trajectory t = assemble_read(zeta, xi, basis);
    std::copy(t.samples.begin(), t.samples.end(), out.begin() + static_cast<std::ptrdiff_t>(g.i2));
    return out;
  };
  const std::vector<cplx> no_zeta(coeffs.zeta.size(), 0.0), no_xi(coeffs.xi0.size(), 0.0);
  const std::vector<cplx> s0 = global(no_zeta, coeffs.xi0), s1 = global(no_zeta, coeffs.xi1);
  const std::vector<cplx> ro = global(coeffs.zeta, no_xi);
  std::vector<cplx> ref0(ro.size()), ref1(ro.size());
  for (std::size_t m = 0; m < ro.size(); ++m) {
    ref0[m] = s0[m] + ro[m];
    ref1[m] = s1[m] + ro[m];
  }
  const RetrievalMatrices mats = retrieval_matrices(s0, s1, ro, g.dt, g.ia, g.ic);
  const std::size_t window_end = noise_window_end(g, spec.window);
  const std::uint32_t n = counter(spec.n_realizations, "realization count");
  std::vector<std::array<cplx, 2>> est(n);
  parallel_for(n, [&](std::size_t r) {
    const Trajectory a =
        solve_noisy(ens, kernel, sections, window_end, spec, static_cast<std::uint32_t>(r), point);
    const RetrievalResult rr = retrieve(overlaps(a.samples, ref0, ref1, g.dt, g.ia, g.ic), mats);
    est[r] = {rr.alpha_r, rr.beta_r};
  });
  NoiseStudyResult out;
  reduce(est, 1.0, out, 0.0, 0.0);
  out.eps_alpha = std::abs(sup.alpha - out.mean_alpha);
  out.eps_beta = std::abs(sup.beta - out.mean_beta);
  out.samples = std::move(est);
  return out;
}

std::vector<SweepPoint> qubit_sweep(const NoiseHarness& harness, const NoiseSpec& spec,
                                    std::size_t n_theta, std::size_t n_phi) {
  if (n_theta < 2 || n_phi < 2) throw ConfigError("qubit_sweep: need at least 2 points per axis");
  std::vector<SweepPoint> pts(n_theta * n_phi);
  parallel_for(pts.size(), [&](std::size_t k) {
    SweepPoint& p = pts[k];
    p.theta = std::numbers::pi * static_cast<double>(k / n_phi) / static_cast<double>(n_theta - 1);
    p.phi = kTwoPi * static_cast<double>(k % n_phi) / static_cast<double>(n_phi - 1);
    p.input = qubit_params(p.theta, p.phi);
    p.result = harness.run(p.input, spec, counter(k, "sweep point"));
    p.bloch = bloch_vector({p.result.mean_alpha, p.result.mean_beta});
  });
  return pts;
}

double max_error(std::span<const SweepPoint> points) {
  double e = 0.0;
  for (const auto& p : points) e = std::max({e, p.result.eps_alpha, p.result.eps_beta});
  return e;
}

AmplitudeSweep amplitude_sweep(const NoiseHarness& harness, const NoiseSpec& spec,
                               std::span<const double> delta_etas, std::size_t n_theta,
                               std::size_t n_phi) {
  for (double d : delta_etas) {
    if (!(d >= 0.0)) throw ConfigError("amplitude_sweep: amplitudes must be non-negative");
  }
  // The retrieved mean is affine in delta_eta under shared random numbers,
  // so one unit-amplitude pass serves every amplitude.
  NoiseSpec unit = spec;
  unit.delta_eta = 1.0;
  const auto pts = qubit_sweep(harness, unit, n_theta, n_phi);
  std::vector<RetrievalResult> det(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) det[k] = harness.noiseless(pts[k].input);

  AmplitudeSweep out;
  out.delta_eta.assign(delta_etas.begin(), delta_etas.end());
  for (double d : delta_etas) {
    double e = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const cplx a = det[k].alpha_r + d * (pts[k].result.mean_alpha - det[k].alpha_r);
      const cplx b = det[k].beta_r + d * (pts[k].result.mean_beta - det[k].beta_r);
      e = std::max({e, std::abs(pts[k].input.alpha - a), std::abs(pts[k].input.beta - b)});
    }
    out.max_eps.push_back(e);
  }
  const std::size_t n = out.delta_eta.size();
  if (n >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += out.delta_eta[i];
      my += out.max_eps[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = out.delta_eta[i] - mx, dy = out.max_eps[i] - my;
      sxx += dx * dx;
      sxy += dx * dy;
      syy += dy * dy;
    }
    out.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    out.intercept = my - out.slope * mx;
    out.r_squared = syy > 0.0 && sxx > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  }
  return out;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
  out << "theta,phi,re_alpha_in,im_alpha_in,re_beta_in,im_beta_in,re_alpha_r,im_alpha_r,"
         "re_beta_r,im_beta_r,eps_alpha,eps_beta,r_x,r_y,r_z\n";
  char line[512];
  for (const auto& p : points) {
    const auto& r = p.result;
    std::snprintf(line, sizeof line,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g,%.17g\n",
                  p.theta, p.phi, p.input.alpha.real(), p.input.alpha.imag(), p.input.beta.real(),
                  p.input.beta.imag(), r.mean_alpha.real(), r.mean_alpha.imag(), r.mean_beta.real(),
                  r.mean_beta.imag(), r.eps_alpha, r.eps_beta, p.bloch[0], p.bloch[1], p.bloch[2]);
    out << line;
  }
}

void write_amplitude_csv(std::ostream& out, const AmplitudeSweep& sweep) {
  out << "delta_eta,max_eps\n";
  char line[128];
  for (std::size_t i = 0; i < sweep.delta_eta.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", sweep.delta_eta[i], sweep.max_eps[i]);
    out << line;
  }
  std::snprintf(line, sizeof line, "# fit: slope=%.17g intercept=%.17g r2=%.17g\n", sweep.slope,
                sweep.intercept, sweep.r_squared);
  out << line;
}

}  // namespace spinmem

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
#include <optional>
#include <vector>

#include "spinmem/units.hpp"

namespace spinmem {

/// Cavity and ensemble constants. Frequencies and rates in rad/ns.
struct SystemParams {
  double omega_c = 0.0;  ///< cavity frequency
  double omega_p = 0.0;  ///< probe (carrier) frequency
  double omega_s = 0.0;  ///< center of the spin distribution
  double kappa = 0.0;    ///< cavity loss rate
  double gamma = 0.0;    ///< single-spin loss rate
  double Omega = 0.0;    ///< collective coupling strength

  /// Cavity detuning from the carrier, always recomputed.
  double delta_c() const { return omega_c - omega_p; }

  /// Throws ConfigError unless kappa > 0, gamma >= 0 and Omega >= 0.
  void validate() const;

  /// kappa = 2pi*0.4 MHz, Omega = 2pi*12.5 MHz, all carriers at 2pi*2.6915 GHz,
  /// gamma = 0.
  static SystemParams paper_defaults();
};

/// q-Gaussian line shape [1 - (1-q) x^2 / Delta^2]^(1/(1-q)) for 1 < q < 3.
class QGaussianShape {
 public:
  QGaussianShape(double q, double delta_w, double norm_c = 1.0);

  /// Build from the full width at half maximum instead of Delta.
  static QGaussianShape from_fwhm(double q, double fwhm);

  double q() const { return q_; }
  double delta_w() const { return delta_w_; }
  double norm_c() const { return norm_c_; }
  /// gamma_q = 2 Delta sqrt((2^q - 2) / (2q - 2)).
  double gamma_q() const;

  /// Unnormalized profile at offset x from the center; equals 1 at x = 0.
  double profile(double x) const;

  QGaussianShape with_norm(double c) const { return {q_, delta_w_, c}; }

 private:
  double q_;
  double delta_w_;
  double norm_c_;
};

/// Multiplicative Gaussian dip 1 - depth * exp(-(w - center)^2 / (2 width^2)).
struct HoleSpec {
  double center = 0.0;
  double width = 0.0;
  double depth = 1.0;

  void validate() const;
  double factor(double omega) const;
};

/// Closed frequency interval in rad/ns.
struct FrequencyInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Spectral spin distribution rho(omega): a q-Gaussian centered at omega_s,
/// optionally multiplied by burned holes, and zero outside its support window.
class SpinDensity {
 public:
  /// support_half_width <= 0 selects the default window of 8 * gamma_q.
  SpinDensity(QGaussianShape shape, double center, std::vector<HoleSpec> holes = {},
              bool renormalize_after_holes = false, double support_half_width = 0.0);

  const QGaussianShape& shape() const { return shape_; }
  double center() const { return center_; }
  const std::vector<HoleSpec>& holes() const { return holes_; }
  bool renormalize_after_holes() const { return renormalize_after_holes_; }
  FrequencyInterval support() const { return {center_ - half_width_, center_ + half_width_}; }

  /// Same density with a different normalization constant.
  SpinDensity with_norm(double c) const;

  /// Same shape and support without any holes.
  SpinDensity without_holes() const;

 private:
  QGaussianShape shape_;
  double center_;
  std::vector<HoleSpec> holes_;
  bool renormalize_after_holes_;
  double half_width_;
};

/// Quadrature nodes and weights realizing integrals over rho(omega) d omega.
struct FrequencyGrid {
  std::vector<double> points;   ///< strictly increasing, rad/ns
  std::vector<double> weights;  ///< positive, rad/ns

  std::size_t size() const { return points.size(); }
};

/// Section boundaries of the write / delay / readout protocol, in ns.
struct SectionLayout {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  double tau_a = 0.0;
  double tau_b = 0.0;
  double tau_c = 0.0;

  /// Throws ConfigError unless T1 < T2 <= tau_a < tau_b < tau_c <= T3.
  void validate() const;

  /// No-hole layout: T2 = 36.72 ns, T3 = 110.15 ns, readout = [T2, T3].
  static SectionLayout paper_case_a();
  /// Hole-burned layout with a ~1 us delay before the readout window.
  static SectionLayout paper_case_b();
};

/// Layout boundaries as indices on the uniform time grid t_m = T1 + m dt.
struct GridLayout {
  double dt = 0.0;
  double t1 = 0.0;
  std::size_t i2 = 0;
  std::size_t i3 = 0;
  std::size_t ia = 0;
  std::size_t ib = 0;
  std::size_t ic = 0;

  double time(std::size_t m) const { return t1 + static_cast<double>(m) * dt; }
  /// Snapped layout in ns.
  SectionLayout layout() const;
};

/// Snap every boundary to the nearest grid point. Throws ConfigError when a
/// boundary moves by more than dt/2 or two boundaries collapse.
GridLayout snap_to_grid(const SectionLayout& layout, double dt);

/// rho(omega) including holes; zero outside the support window.
double density_at(const SpinDensity& density, double omega);

/// Fix the normalization so that the density integrates to one over its
/// support. Without renormalize_after_holes the constant is taken from the
/// hole-free profile, so burned holes reduce the total weight.
SpinDensity normalize(const SpinDensity& density);

/// Integral of density_at over the support by adaptive Gauss-Kronrod.
double integrate_density(const SpinDensity& density);

/// Composite Gauss-Legendre discretization. The span defaults to the
/// support; panels are refined around burned holes. The returned size is
/// n_points rounded up to whole panels.
FrequencyGrid discretize(const SpinDensity& density, std::size_t n_points,
                         std::optional<FrequencyInterval> span = std::nullopt);

/// Gamma ~ kappa + pi Omega^2 rho(omega_s +- Omega), averaged over both sides.
double decoherence_estimate(const SystemParams& params, const SpinDensity& density);

/// Normalized q-Gaussian density of the reference experiment: q = 1.39,
/// FWHM 2pi*9.4 MHz, centered at params.omega_s, with optional holes.
SpinDensity paper_density(const SystemParams& params, std::vector<HoleSpec> holes = {});

/// Two full-depth holes at omega_s +- Omega, width 2pi*0.2 MHz.
std::vector<HoleSpec> default_holes(const SystemParams& params);

}  // namespace spinmem

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

#include "spinmem/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

constexpr std::size_t kPanelOrder = 20;
// Half-width of the window around a hole that gets refined panels, in hole widths.
constexpr double kHoleWindow = 8.0;

// Golub-Welsch nodes and weights on [-1, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(std::size_t n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                 static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    const double b = kk / std::sqrt(4.0 * kk * kk - 1.0);
    jacobi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
    jacobi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  std::vector<double> x(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = eig.eigenvalues()(static_cast<Eigen::Index>(i));
    const double v0 = eig.eigenvectors()(0, static_cast<Eigen::Index>(i));
    w[i] = 2.0 * v0 * v0;
  }
  // Symmetrize to remove eigen-solver noise.
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double xs = 0.5 * (x[n - 1 - i] - x[i]);
    const double ws = 0.5 * (w[n - 1 - i] + w[i]);
    x[i] = -xs;
    x[n - 1 - i] = xs;
    w[i] = ws;
    w[n - 1 - i] = ws;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
  return {x, w};
}

// Breakpoints splitting [lo, hi] at the refinement windows of the holes.
std::vector<std::pair<double, double>> hole_windows(const SpinDensity& density, double lo,
                                                    double hi) {
  std::vector<std::pair<double, double>> windows;
  for (const auto& h : density.holes()) {
    const double a = std::max(lo, h.center - kHoleWindow * h.width);
    const double b = std::min(hi, h.center + kHoleWindow * h.width);
    if (b > a) windows.emplace_back(a, b);
  }
  std::sort(windows.begin(), windows.end());
  // Merge overlapping windows.
  std::vector<std::pair<double, double>> merged;
  for (const auto& w : windows) {
    if (!merged.empty() && w.first <= merged.back().second) {
      merged.back().second = std::max(merged.back().second, w.second);
    } else {
      merged.push_back(w);
    }
  }
  return merged;
}

double min_hole_width(const SpinDensity& density) {
  double w = INFINITY;
  for (const auto& h : density.holes()) w = std::min(w, h.width);
  return w;
}

}  // namespace

void SystemParams::validate() const {
  if (!(kappa > 0.0)) throw ConfigError("system.kappa must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("system.gamma must be >= 0");
  if (!(Omega >= 0.0)) throw ConfigError("system.Omega must be >= 0");
  for (double w : {omega_c, omega_p, omega_s}) {
    if (!std::isfinite(w)) throw ConfigError("system frequencies must be finite");
  }
}

SystemParams SystemParams::paper_defaults() {
  SystemParams p;
  p.omega_c = mhz_to_rad_ns(2691.5);
  p.omega_p = p.omega_c;
  p.omega_s = p.omega_c;
  p.kappa = mhz_to_rad_ns(0.4);
  p.gamma = 0.0;
  p.Omega = mhz_to_rad_ns(12.5);
  return p;
}

QGaussianShape::QGaussianShape(double q, double delta_w, double norm_c)
    : q_(q), delta_w_(delta_w), norm_c_(norm_c) {
  if (!(q > 1.0 && q < 3.0)) {
    throw ConfigError("density.q must satisfy 1 < q < 3, got " + std::to_string(q));
  }
  if (!(delta_w > 0.0)) throw ConfigError("density width must be > 0");
}

QGaussianShape QGaussianShape::from_fwhm(double q, double fwhm) {
  if (!(q > 1.0 && q < 3.0)) {
    throw ConfigError("density.q must satisfy 1 < q < 3, got " + std::to_string(q));
  }
  const double ratio = std::sqrt((std::pow(2.0, q) - 2.0) / (2.0 * q - 2.0));
  return QGaussianShape(q, fwhm / (2.0 * ratio));
}

double QGaussianShape::gamma_q() const {
  return 2.0 * delta_w_ * std::sqrt((std::pow(2.0, q_) - 2.0) / (2.0 * q_ - 2.0));
}

double QGaussianShape::profile(double x) const {
  const double u = x / delta_w_;
  const double base = 1.0 - (1.0 - q_) * u * u;
  if (base <= 0.0) return 0.0;
  return std::pow(base, 1.0 / (1.0 - q_));
}

void HoleSpec::validate() const {
  if (!(width > 0.0)) throw ConfigError("holes[].width must be > 0");
  if (!(depth >= 0.0 && depth <= 1.0)) throw ConfigError("holes[].depth must lie in [0, 1]");
}

double HoleSpec::factor(double omega) const {
  const double u = (omega - center) / width;
  return 1.0 - depth * std::exp(-0.5 * u * u);
}

SpinDensity::SpinDensity(QGaussianShape shape, double center, std::vector<HoleSpec> holes,
                         bool renormalize_after_holes, double support_half_width)
    : shape_(shape),
      center_(center),
      holes_(std::move(holes)),
      renormalize_after_holes_(renormalize_after_holes),
      half_width_(support_half_width > 0.0 ? support_half_width : 8.0 * shape.gamma_q()) {
  for (const auto& h : holes_) h.validate();
}

SpinDensity SpinDensity::with_norm(double c) const {
  SpinDensity d = *this;
  d.shape_ = shape_.with_norm(c);
  return d;
}

SpinDensity SpinDensity::without_holes() const {
  SpinDensity d = *this;
  d.holes_.clear();
  return d;
}

SectionLayout GridLayout::layout() const {
  return {t1, time(i2), time(i3), time(ia), time(ib), time(ic)};
}

void SectionLayout::validate() const {
  const bool ok = t1 < t2 && t2 <= tau_a && tau_a < tau_b && tau_b < tau_c && tau_c <= t3;
  if (!ok) {
    throw ConfigError("layout must satisfy T1 < T2 <= tau_a < tau_b < tau_c <= T3");
  }
}

SectionLayout SectionLayout::paper_case_a() {
  SectionLayout l;
  l.t1 = 0.0;
  l.t2 = 36.72;
  l.t3 = 110.15;
  l.tau_a = l.t2;
  l.tau_c = l.t3;
  l.tau_b = 0.5 * (l.tau_a + l.tau_c);
  return l;
}

SectionLayout SectionLayout::paper_case_b() {
  SectionLayout l;
  l.t1 = 0.0;
  l.t2 = 73.4;
  l.t3 = 1174.9;
  l.tau_a = 1114.3;
  l.tau_c = 1153.6;
  l.tau_b = 0.5 * (l.tau_a + l.tau_c);
  return l;
}

GridLayout snap_to_grid(const SectionLayout& layout, double dt) {
  layout.validate();
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  GridLayout g;
  g.dt = dt;
  g.t1 = layout.t1;
  auto snap = [&](double t, const char* name) {
    const double steps = (t - layout.t1) / dt;
    const double r = std::round(steps);
    if (std::abs(steps - r) > 0.5 + 1e-9) {
      throw ConfigError(std::string("layout.") + name + " cannot be snapped to the time grid");
    }
    return static_cast<std::size_t>(r);
  };
  g.i2 = snap(layout.t2, "t2");
  g.i3 = snap(layout.t3, "t3");
  g.ia = snap(layout.tau_a, "tau_a");
  g.ib = snap(layout.tau_b, "tau_b");
  g.ic = snap(layout.tau_c, "tau_c");
  const bool ok = 0 < g.i2 && g.i2 <= g.ia && g.ia < g.ib && g.ib < g.ic && g.ic <= g.i3;
  if (!ok) throw ConfigError("layout sections collapse after snapping to dt");
  return g;
}

double density_at(const SpinDensity& density, double omega) {
  const auto sup = density.support();
  if (omega < sup.lo || omega > sup.hi) return 0.0;
  double rho = density.shape().norm_c() * density.shape().profile(omega - density.center());
  for (const auto& h : density.holes()) rho *= h.factor(omega);
  return std::max(rho, 0.0);
}

double integrate_density(const SpinDensity& density) {
  using boost::math::quadrature::gauss_kronrod;
  const auto sup = density.support();
  // Split at the density center and the hole windows so narrow features are
  // never skipped by the adaptive bisection.
  std::vector<double> cuts{sup.lo, sup.hi};
  if (density.center() > sup.lo && density.center() < sup.hi) cuts.push_back(density.center());
  for (const auto& w : hole_windows(density, sup.lo, sup.hi)) {
    cuts.push_back(w.first);
    cuts.push_back(w.second);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  auto f = [&](double w) { return density_at(density, w); };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 15, 1e-13);
  }
  return total;
}

SpinDensity normalize(const SpinDensity& density) {
  const SpinDensity unit = density.with_norm(1.0);
  const double mass =
      integrate_density(density.renormalize_after_holes() ? unit : unit.without_holes());
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw ConfigError("spin density integrates to a non-positive value");
  }
  return density.with_norm(1.0 / mass);
}

FrequencyGrid discretize(const SpinDensity& density, std::size_t n_points,
                         std::optional<FrequencyInterval> span) {
  if (n_points < 2) throw ConfigError("discretize requires n_points >= 2");
  const auto sup = density.support();
  FrequencyInterval s = span.value_or(sup);
  const double lo = std::max(s.lo, sup.lo);
  const double hi = std::min(s.hi, sup.hi);
  if (!(hi > lo)) throw ConfigError("frequency span lies outside the density support");

  const std::size_t order = std::min(kPanelOrder, n_points);
  const auto [nodes, wts] = gauss_legendre(order);
  std::size_t panels_total = (n_points + order - 1) / order;

  // Refined panels inside hole windows, of width at most one hole width.
  const auto windows = hole_windows(density, lo, hi);
  std::vector<std::pair<double, double>> panels;
  std::size_t hole_panels = 0;
  std::vector<std::size_t> per_window;
  for (const auto& w : windows) {
    const auto n = static_cast<std::size_t>(
        std::ceil((w.second - w.first) / min_hole_width(density) - 1e-9));
    per_window.push_back(std::max<std::size_t>(n, 1));
    hole_panels += per_window.back();
  }

  // Complementary segments share the remaining panels by length.
  std::vector<std::pair<double, double>> segments;
  double cursor = lo;
  for (const auto& w : windows) {
    if (w.first > cursor) segments.emplace_back(cursor, w.first);
    cursor = w.second;
  }
  if (hi > cursor) segments.emplace_back(cursor, hi);
  double seg_length = 0.0;
  for (const auto& sg : segments) seg_length += sg.second - sg.first;

  const std::size_t remaining =
      std::max(panels_total > hole_panels ? panels_total - hole_panels : 0, segments.size());
  std::vector<std::size_t> per_segment(segments.size(), 1);
  if (!segments.empty()) {
    // Largest-remainder apportionment keeps the total exact.
    std::vector<double> share(segments.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      share[i] = static_cast<double>(remaining) * (segments[i].second - segments[i].first) /
                 seg_length;
      per_segment[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(share[i])));
      assigned += per_segment[i];
    }
    std::vector<std::size_t> idx(segments.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return share[a] - std::floor(share[a]) > share[b] - std::floor(share[b]);
    });
    for (std::size_t k = 0; assigned < remaining; ++k, ++assigned) ++per_segment[idx[k % idx.size()]];
  }

  auto add_uniform = [&](double a, double b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double pa = a + (b - a) * static_cast<double>(i) / static_cast<double>(n);
      const double pb = a + (b - a) * static_cast<double>(i + 1) / static_cast<double>(n);
      panels.emplace_back(pa, pb);
    }
  };
  {
    std::size_t wi = 0, si = 0;
    double pos = lo;
    while (si < segments.size() || wi < windows.size()) {
      if (si < segments.size() && segments[si].first == pos) {
        add_uniform(segments[si].first, segments[si].second, per_segment[si]);
        pos = segments[si].second;
        ++si;
      } else {
        add_uniform(windows[wi].first, windows[wi].second, per_window[wi]);
        pos = windows[wi].second;
        ++wi;
      }
    }
  }

  FrequencyGrid grid;
  grid.points.reserve(panels.size() * order);
  grid.weights.reserve(panels.size() * order);
  for (const auto& [a, b] : panels) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < order; ++i) {
      grid.points.push_back(mid + half * nodes[i]);
      grid.weights.push_back(half * wts[i]);
    }
  }
  return grid;
}

double decoherence_estimate(const SystemParams& params, const SpinDensity& density) {
  const double rho_up = density_at(density, params.omega_s + params.Omega);
  const double rho_dn = density_at(density, params.omega_s - params.Omega);
  return params.kappa + std::numbers::pi * params.Omega * params.Omega * 0.5 * (rho_up + rho_dn);
}

SpinDensity paper_density(const SystemParams& params, std::vector<HoleSpec> holes) {
  const auto shape = QGaussianShape::from_fwhm(1.39, mhz_to_rad_ns(9.4));
  return normalize(SpinDensity(shape, params.omega_s, std::move(holes)));
}

std::vector<HoleSpec> default_holes(const SystemParams& params) {
  const double w = mhz_to_rad_ns(0.2);
  return {HoleSpec{params.omega_s - params.Omega, w, 1.0},
          HoleSpec{params.omega_s + params.Omega, w, 1.0}};
}

}  // namespace spinmem

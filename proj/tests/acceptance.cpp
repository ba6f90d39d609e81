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

// End-to-end acceptance checks at production resolution. Prints one
// PASS/FAIL line per criterion and exits non-zero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spinmem/errors.hpp"
#include "spinmem/noise.hpp"
#include "spinmem/parallel.hpp"
#include "spinmem/pipeline.hpp"
#include "spinmem/retrieval.hpp"

using namespace spinmem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, double secs, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %2d: %s  (%.1f s)  %s\n", id, pass ? "PASS" : "FAIL", secs, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct SinePulse {
  std::vector<cplx> c;
  double wf = 0.0;
  double length = 0.0;
  cplx operator()(double t) const {
    if (t < 0.0 || t > length) return 0.0;
    cplx v = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) v += c[k] * std::sin(static_cast<double>(k + 1) * wf * t);
    return v;
  }
};

SinePulse random_pulse(std::mt19937_64& rng, double kappa, double length) {
  std::normal_distribution<double> n;
  std::vector<cplx> c(1 + rng() % 5);
  for (auto& v : c) v = kappa * cplx(n(rng), n(rng));
  return {c, std::numbers::pi / length, length};
}

std::vector<cplx> sample(const SinePulse& p, double dt, std::size_t n) {
  std::vector<cplx> v(n);
  for (std::size_t m = 0; m < n; ++m) v[m] = p(dt * static_cast<double>(m));
  return v;
}

double rel_max_diff(std::span<const cplx> a, std::span<const cplx> b) {
  double d = 0.0, s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
    s = std::max(s, std::abs(b[i]));
  }
  return d / s;
}

// Trapezoid integral of |A| (power 1) or |A|^2 (power 2) over samples [i0, i1].
double integrate(const Trajectory& t, std::size_t i0, std::size_t i1, int power) {
  double s = 0.0;
  for (std::size_t m = i0; m <= i1; ++m) {
    const double v = power == 1 ? std::abs(t.samples[m]) : std::norm(t.samples[m]);
    s += (m == i0 || m == i1 ? 0.5 : 1.0) * v;
  }
  return s * t.dt;
}

// Integrated |A| in the readout window over integrated |A| in the write
// section, plus the same ratio for |A|^2.
std::array<double, 2> efficiency(const Workspace& ws, std::span<const cplx> xi, std::span<const cplx> zeta) {
  const Trajectory t = simulate_protocol(ws, xi, zeta);
  const auto& g = ws.grid;
  return {integrate(t, g.ia, g.ic, 1) / integrate(t, 0, g.i2, 1),
          integrate(t, g.ia, g.ic, 2) / integrate(t, 0, g.i2, 2)};
}

// ---------------------------------------------------------------------------

void solver_oracle(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  // The ODE reference carries every spin explicitly, so a coarser frequency
  // grid keeps it affordable; both sides share it.
  const std::size_t n_freq = 4000;
  const SpinDensity d = make_density(cfg);
  const Ensemble ens = Ensemble::make(cfg.system, d, discretize(d, n_freq));
  const auto spins = SpinStateVector::from_density(cfg.system, d, n_freq);
  const double horizon = cfg.layout.t3;
  std::mt19937_64 rng(2024);
  double worst = 0.0, worst_ratio_dev = 0.0, min_ratio = 1e300, max_ratio = 0.0;
  std::vector<KernelTable> tables;
  for (double dt : {cfg.dt, 0.5 * cfg.dt}) tables.push_back(kernel_table(ens, dt, horizon));
  for (int trial = 0; trial < 10; ++trial) {
    const SinePulse pulse = random_pulse(rng, cfg.system.kappa, cfg.layout.t2);
    double err[2];
    for (int level = 0; level < 2; ++level) {
      const KernelTable& k = tables[level];
      const std::size_t n = k.steps() + 1;
      const auto a = solve_volterra(k, driving_term(cfg.system, sample(pulse, k.dt, n), k.dt), {});
      const auto ode = solve_ode_reference(cfg.system, spins, pulse, 0.0, 0.0, k.dt, n - 1, 8 >> level);
      err[level] = rel_max_diff(a.samples, ode.trajectory.samples);
    }
    worst = std::max(worst, err[0]);
    const double ratio = err[0] / err[1];
    min_ratio = std::min(min_ratio, ratio);
    max_ratio = std::max(max_ratio, ratio);
    worst_ratio_dev = std::max(worst_ratio_dev, std::abs(ratio - 4.0));
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-5 && worst_ratio_dev <= 1.0 && secs < 60.0, secs,
         fmt("max rel discrepancy %.3g (< 1e-5), halving-dt ratio in [%.2f, %.2f] (4 +- 1), runtime < 60 s",
             worst, min_ratio, max_ratio));
}

void linearity(const Workspace& ws) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  const std::size_t len = ws.kernel.steps() + 1;
  const double kappa = ws.cfg.system.kappa;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto e1 = sample(random_pulse(rng, kappa, ws.cfg.layout.t2), ws.kernel.dt, len);
    const auto e2 = sample(random_pulse(rng, kappa, ws.cfg.layout.t3), ws.kernel.dt, len);
    const cplx c1(n(rng), n(rng)), c2(n(rng), n(rng));
    Eigen::MatrixXcd f(len, 3);
    for (std::size_t m = 0; m < len; ++m) {
      f(m, 0) = e1[m];
      f(m, 1) = e2[m];
      f(m, 2) = c1 * e1[m] + c2 * e2[m];
    }
    std::vector<std::vector<cplx>> drives(3);
    for (int j = 0; j < 3; ++j) {
      std::vector<cplx> col(len);
      for (std::size_t m = 0; m < len; ++m) col[m] = f(m, j);
      drives[j] = driving_term(ws.cfg.system, col, ws.kernel.dt);
    }
    const auto a1 = solve_volterra(ws.kernel, drives[0], {});
    const auto a2 = solve_volterra(ws.kernel, drives[1], {});
    const auto am = solve_volterra(ws.kernel, drives[2], {});
    std::vector<cplx> sum(len);
    for (std::size_t m = 0; m < len; ++m) sum[m] = c1 * a1.samples[m] + c2 * a2.samples[m];
    worst = std::max(worst, rel_max_diff(am.samples, sum));
  }
  const double secs = seconds_since(t0);
  report(2, worst < 1e-10 && secs < 30.0, secs,
         fmt("100 pairs, max rel deviation %.3g (< 1e-10), runtime < 30 s", worst));
}

void table_normalization() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (const char* name : {"table1", "table2"}) {
    const CoefficientTable t = bundled_table(name);
    auto unit = [](const std::vector<cplx>& v) { return normalized_power(v); };
    const double p[3] = {unit(t.xi0), unit(t.xi1), unit(t.zeta)};
    // Only the first table is held to the tolerance; the second is shown for reference.
    if (std::string(name) == "table1") {
      for (double v : p) pass = pass && std::abs(v - 1.0) <= 0.01;
    }
    detail += fmt("%s: %.4f %.4f %.4f  ", name, p[0], p[1], p[2]);
  }
  report(3, pass, seconds_since(t0), detail + "(1 +- 0.01 for table1)");
}

void power_ratios(double kappa) {
  const auto t0 = Clock::now();
  const auto a = load_coefficients("table1", kappa), b = load_coefficients("table2", kappa);
  const double ra = power_ratio(a.zeta, a.xi0), rb = power_ratio(b.zeta, b.xi0);
  report(4, std::abs(ra - 0.068) <= 0.001 && std::abs(rb - 0.013) <= 0.001, seconds_since(t0),
         fmt("table1 %.4f (0.068 +- 0.001), table2 %.4f (0.013 +- 0.001)", ra, rb));
}

void separation(const Workspace& ws) {
  const auto t0 = Clock::now();
  const auto c = load_coefficients("table1", ws.cfg.system.kappa);
  const auto& g = ws.grid;
  const Trajectory r0 = simulate_protocol(ws, c.xi0, c.zeta);
  const Trajectory r1 = simulate_protocol(ws, c.xi1, c.zeta);
  const cplx o01 = overlap_integral(r0.samples, r1.samples, g.dt, g.ia, g.ic);
  const double e0 = integrate(r0, g.ia, g.ic, 2), e1 = integrate(r1, g.ia, g.ic, 2);
  const double cross = std::abs(o01) / std::sqrt(e0 * e1);
  const double in0 = integrate(r0, g.ia, g.ib, 2) / e0, in1 = integrate(r1, g.ib, g.ic, 2) / e1;
  const double secs = seconds_since(t0);
  report(5, cross < 0.1 && in0 >= 0.8 && in1 >= 0.8 && secs < 30.0, secs,
         fmt("cross-overlap %.4f (< 0.1), in-bin energy %.3f / %.3f (>= 0.8)", cross, in0, in1));
}

ControlSolution case_a_optimization(const Workspace& ws, bool& ok) {
  const auto t0 = Clock::now();
  ControlSolution sol;
  try {
    sol = optimize(make_control_problem(ws), ws.cfg.optimizer);
    ok = true;
  } catch (const InfeasibleError& e) {
    report(6, false, seconds_since(t0), std::string("optimizer: ") + e.what());
    ok = false;
    return sol;
  }
  const auto e0 = efficiency(ws, sol.coeffs.xi0, sol.coeffs.zeta);
  const auto e1 = efficiency(ws, sol.coeffs.xi1, sol.coeffs.zeta);
  const double viol = sol.residuals.max_violation();
  const double secs = seconds_since(t0);
  const bool pass = e0[0] >= 0.3 && e0[0] <= 0.5 && e1[0] >= 0.3 && e1[0] <= 0.5 && viol <= 1e-6 && secs < 600.0;
  report(6, pass, secs,
         fmt("efficiency int|A| %.3f / %.3f (0.30-0.50), int|A|^2 %.3f / %.3f, max violation %.2g (<= 1e-6), S = %.4g",
             e0[0], e1[0], e0[1], e1[1], viol, sol.s_target));
  return sol;
}

void case_b(const RunConfig& base) {
  const auto t0 = Clock::now();
  RunConfig cfg = preset_config("paper-case-b");
  cfg.threads = base.threads;
  cfg.kernel_cache = base.kernel_cache;
  const Workspace ws = make_workspace(cfg);
  const auto tabulated = load_coefficients("table2", cfg.system.kappa);
  const std::vector<cplx> no_read(ws.basis.n2(), 0.0);
  const Trajectory decay = simulate_protocol(ws, tabulated.xi0, no_read);
  const DecayFit fit = fit_peak_envelope(decay, ws.grid.time(ws.grid.i2), ws.grid.time(ws.grid.i3));
  const double lifetime = 1.0 / fit.rate;
  std::string detail = fmt("free-decay 1/e time of |A| %.0f ns (> 500)", lifetime);
  bool pass = lifetime > 500.0;
  try {
    const ControlSolution sol = optimize(make_control_problem(ws), cfg.optimizer);
    const auto e0 = efficiency(ws, sol.coeffs.xi0, sol.coeffs.zeta);
    const auto e1 = efficiency(ws, sol.coeffs.xi1, sol.coeffs.zeta);
    pass = pass && e0[0] >= 0.01 && e0[0] <= 0.15 && e1[0] >= 0.01 && e1[0] <= 0.15;
    detail += fmt(", delayed-readout efficiency int|A| %.3f / %.3f (0.01-0.15), int|A|^2 %.3f / %.3f",
                  e0[0], e1[0], e0[1], e1[1]);
  } catch (const InfeasibleError& e) {
    pass = false;
    detail += std::string(", delayed-readout optimization infeasible: ") + e.what();
  }
  report(7, pass, seconds_since(t0), detail);
}

void decoherence(const Workspace& ws) {
  const auto t0 = Clock::now();
  const double horizon = 400.0;
  const KernelTable k = kernel_table(ws.ens, ws.cfg.dt, horizon);
  const Trajectory t = kick_response(ws.ens, k, k.steps() + 1);
  const DecayFit fit = fit_peak_envelope(t, 0.0, horizon);
  const double gamma = decoherence_estimate(ws.cfg.system, ws.density);
  const double dev = std::abs(fit.rate - gamma) / gamma;
  report(8, dev <= 0.2, seconds_since(t0),
         fmt("|A| decay rate %.5f /ns vs estimate %.5f /ns (1/estimate %.1f ns), deviation %.0f%% (<= 20%%); |A|^2 rate %.5f",
             fit.rate, gamma, 1.0 / gamma, 100.0 * dev, 2.0 * fit.rate));
}

void noiseless_retrieval(const Workspace& ws, const ControlCoefficients& opt, bool have_opt) {
  const auto t0 = Clock::now();
  NoiseSpec clean;
  clean.delta_eta = 0.0;
  const NoiseHarness tabulated(ws.ens, ws.kernel, ws.basis, load_coefficients("table1", ws.cfg.system.kappa));
  const double e_table = max_error(qubit_sweep(tabulated, clean));
  double e_opt = 0.0;
  if (have_opt) e_opt = max_error(qubit_sweep(NoiseHarness(ws.ens, ws.kernel, ws.basis, opt), clean));
  report(9, e_table < 1e-9 && e_opt < 1e-9, seconds_since(t0),
         fmt("21x41 grid, max error %.3g (table1), %.3g (optimized) (< 1e-9)", e_table, e_opt));
}

void noise_study(const Workspace& ws, const ControlCoefficients& opt, bool have_opt) {
  const auto t0 = Clock::now();
  NoiseSpec spec = ws.cfg.resolved_noise();
  spec.delta_eta = 0.05 * ws.cfg.system.kappa;
  spec.n_realizations = 200;
  std::vector<double> amps;
  for (int i = 1; i <= 10; ++i) amps.push_back(0.01 * i * ws.cfg.system.kappa);
  const NoiseHarness tabulated(ws.ens, ws.kernel, ws.basis, load_coefficients("table1", ws.cfg.system.kappa));
  const double e_table = max_error(qubit_sweep(tabulated, spec));
  std::optional<NoiseHarness> optimized;
  if (have_opt) optimized.emplace(ws.ens, ws.kernel, ws.basis, opt);
  const NoiseHarness& h = have_opt ? *optimized : tabulated;
  const double e = max_error(qubit_sweep(h, spec));
  const AmplitudeSweep s = amplitude_sweep(h, spec, amps);
  const double secs = seconds_since(t0);
  report(10, e <= 0.03 && s.r_squared > 0.95 && secs < 900.0, secs,
         fmt("max error %.4f at 0.05 kappa (<= 0.03) [%s], table1 %.4f; amplitude fit R^2 %.5f (> 0.95)",
             e, have_opt ? "optimized" : "table1", e_table, s.r_squared));
}

void determinism(const Workspace& ws) {
  const auto t0 = Clock::now();
  const unsigned hw = std::max(4u, std::thread::hardware_concurrency());
  auto sweep_csv = [&](unsigned threads) {
    set_thread_count(threads);
    const NoiseHarness h(ws.ens, ws.kernel, ws.basis, load_coefficients("table1", ws.cfg.system.kappa));
    std::ostringstream out;
    write_sweep_csv(out, qubit_sweep(h, ws.cfg.resolved_noise(), 11, 21));
    return out.str();
  };
  auto optimize_csv = [&](unsigned threads) {
    set_thread_count(threads);
    OptimizerOptions o = ws.cfg.optimizer;
    o.restarts = 3;
    std::ostringstream out;
    write_coefficient_table(out, solution_table(optimize(make_control_problem(ws), o).coeffs, ws.cfg.system.kappa));
    return out.str();
  };
  auto trajectory_csv = [&](unsigned threads) {
    set_thread_count(threads);
    const auto c = load_coefficients("table1", ws.cfg.system.kappa);
    std::ostringstream out;
    write_trajectory_csv(out, simulate_protocol(ws, c.xi1, c.zeta));
    return out.str();
  };
  const bool sweep = sweep_csv(1) == sweep_csv(hw) && sweep_csv(1) == sweep_csv(1);
  const bool opt = optimize_csv(1) == optimize_csv(hw);
  const bool traj = trajectory_csv(1) == trajectory_csv(hw);
  set_thread_count(ws.cfg.threads);
  report(11, sweep && opt && traj, seconds_since(t0),
         fmt("noise sweep %s, optimizer %s, trajectory %s (1 vs %u threads)", sweep ? "identical" : "differs",
             opt ? "identical" : "differs", traj ? "identical" : "differs", hw));
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg = preset_config("paper-case-a");
  if (argc > 1) cfg.kernel_cache = argv[1];
  try {
    const auto t0 = Clock::now();
    const Workspace ws = make_workspace(cfg);
    std::printf("case A workspace: %zu frequency points, dt %.3g ns, %.1f s\n", cfg.n_freq, cfg.dt,
                seconds_since(t0));
    solver_oracle(cfg);
    linearity(ws);
    table_normalization();
    power_ratios(cfg.system.kappa);
    separation(ws);
    bool have_opt = false;
    const ControlSolution sol = case_a_optimization(ws, have_opt);
    case_b(cfg);
    decoherence(ws);
    noiseless_retrieval(ws, sol.coeffs, have_opt);
    noise_study(ws, sol.coeffs, have_opt);
    determinism(ws);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

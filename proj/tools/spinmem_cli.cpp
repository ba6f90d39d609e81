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

// spinmem: simulate, optimize and read back time-binned cavity responses.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 infeasible optimization, 4 degenerate retrieval, 5 numerical instability.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spinmem/config.hpp"
#include "spinmem/errors.hpp"
#include "spinmem/noise.hpp"
#include "spinmem/optimizer.hpp"
#include "spinmem/pipeline.hpp"
#include "spinmem/retrieval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spinmem;

namespace {

// Options every subcommand accepts. Precedence: preset, config file,
// --set overrides, then the named flags.
struct Common {
  std::string preset;
  std::string config;
  std::vector<std::string> sets;
  std::string output_dir;
  std::optional<double> dt;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  std::optional<int> restarts;
  std::optional<std::string> kernel_cache;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--preset", c.preset, "paper-case-a or paper-case-b");
  app->add_option("--config", c.config, "JSON configuration file");
  app->add_option("--set", c.sets, "override, e.g. optimizer.restarts=4 (repeatable)");
  app->add_option("--output-dir", c.output_dir, "directory for artifacts");
  app->add_option("--dt", c.dt, "time step in ns");
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  app->add_option("--seed", c.seed, "optimizer and noise seed");
  app->add_option("--restarts", c.restarts, "optimizer restarts");
  app->add_option("--kernel-cache", c.kernel_cache, "directory for cached kernel tables");
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

RunConfig resolve(const Common& c, const std::string& default_preset = "paper-case-a") {
  RunConfig cfg = preset_config(c.preset.empty() ? default_preset : c.preset);
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("--config: cannot open " + c.config);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("--config: " + std::string(e.what()));
    }
    // A preset given on the command line wins over the file's.
    if (!c.preset.empty()) doc.erase("preset");
    cfg = apply_json(cfg, doc);
  }
  // Overrides are merged first so that related fields can change together.
  json doc = json::object();
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + s + ": expected key=value");
    json* node = &doc;
    std::string path = s.substr(0, eq);
    for (std::size_t dot; (dot = path.find('.')) != std::string::npos; path = path.substr(dot + 1)) {
      node = &(*node)[path.substr(0, dot)];
    }
    (*node)[path] = parse_value(s.substr(eq + 1));
  }
  if (!c.sets.empty()) cfg = apply_json(cfg, doc);
  if (c.dt) cfg.dt = *c.dt;
  if (c.threads) cfg.threads = *c.threads;
  if (c.seed) cfg.optimizer.seed = cfg.noise.seed = *c.seed;
  if (c.restarts) cfg.optimizer.restarts = *c.restarts;
  if (c.kernel_cache) cfg.kernel_cache = *c.kernel_cache;
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path d(cfg.output_dir);
  fs::create_directories(d);
  return d;
}

cplx parse_complex(const std::string& text, const char* flag) {
  std::istringstream in(text);
  double re = 0.0, im = 0.0;
  char sep = 0;
  if (!(in >> re)) throw ConfigError(std::string(flag) + ": cannot parse '" + text + "'");
  if (in >> sep) {
    if (sep != ',' || !(in >> im)) throw ConfigError(std::string(flag) + ": expected re or re,im");
  }
  return {re, im};
}

json residual_json(const ConstraintResiduals& r) {
  json j = json::object();
  for (const auto& [name, v] : r.equalities) j[name] = v;
  for (const auto& [name, v] : r.inequalities) j[name] = v;
  return j;
}

json metrics_json(const ControlMetrics& m) {
  return {{"bin_energy", {{m.bin_energy[0][0], m.bin_energy[0][1]}, {m.bin_energy[1][0], m.bin_energy[1][1]}}},
          {"readout_energy", {m.readout_energy[0], m.readout_energy[1]}},
          {"write_energy", {m.write_energy[0], m.write_energy[1]}},
          {"efficiency", {m.efficiency[0], m.efficiency[1]}},
          {"cross_overlap", m.cross_overlap},
          {"power_ratio", m.power_ratio}};
}

void write_csv(const fs::path& file, Manifest& manifest, const Trajectory& t) {
  write_trajectory_csv(file.string(), t);
  manifest.add_output(file);
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string pulse = "table";
  std::string coeffs;
  int state = 0;
  bool no_readout = false;
};

int cmd_simulate(const RunConfig& cfg, const SimulateArgs& a) {
  const Workspace ws = make_workspace(cfg);
  ControlCoefficients c;
  c.xi0.assign(ws.basis.n1(), 0.0);
  c.xi1 = c.xi0;
  c.zeta.assign(ws.basis.n2(), 0.0);
  std::string source = "zero";
  int state = a.state;
  if (a.pulse != "zero") {
    // "table" uses --coeffs or the preset table; "<table>-ket<k>" names both.
    source = a.coeffs.empty() ? cfg.table : a.coeffs;
    if (a.pulse != "table") {
      const auto dash = a.pulse.rfind("-ket");
      if (dash == std::string::npos || dash + 5 != a.pulse.size() ||
          (a.pulse.back() != '0' && a.pulse.back() != '1')) {
        throw ConfigError("--pulse: expected zero, table or <table>-ket0/1, got '" + a.pulse + "'");
      }
      source = a.pulse.substr(0, dash);
      state = a.pulse.back() - '0';
    }
    if (source.empty()) throw ConfigError("--pulse: no coefficient source for this preset");
    c = load_coefficients(source, cfg.system.kappa);
  }
  if (c.xi0.size() != ws.basis.n1() || c.zeta.size() != ws.basis.n2()) {
    throw ConfigError("coefficients: sizes do not match basis.n1 / basis.n2");
  }
  if (a.no_readout) std::fill(c.zeta.begin(), c.zeta.end(), cplx(0.0));
  const auto& xi = state == 0 ? c.xi0 : c.xi1;
  const fs::path dir = out_dir(cfg);
  Manifest m("simulate", cfg);
  write_csv(dir / "trajectory.csv", m, simulate_protocol(ws, xi, c.zeta));
  m.results() = {{"source", source}, {"state", state}, {"readout", !a.no_readout}};
  m.write(dir / "manifest.json");
  return 0;
}

// ------------------------------------------------------------------- basis

int cmd_basis(const RunConfig& cfg) {
  const Workspace ws = make_workspace(cfg);
  const fs::path dir = out_dir(cfg);
  Manifest m("basis", cfg);
  auto dump = [&](const char* name, const Eigen::MatrixXcd& y, std::size_t first) {
    const fs::path file = dir / name;
    std::ofstream out(file);
    out << "t_ns";
    for (Eigen::Index k = 0; k < y.cols(); ++k) out << ",re_" << k + 1 << ",im_" << k + 1;
    out << "\n";
    char buf[64];
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", ws.grid.time(first + static_cast<std::size_t>(r)));
      out << buf;
      for (Eigen::Index k = 0; k < y.cols(); ++k) {
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g", y(r, k).real(), y(r, k).imag());
        out << buf;
      }
      out << "\n";
    }
    out.close();
    m.add_output(file);
  };
  dump("basis_write.csv", ws.basis.write, 0);
  dump("basis_read.csv", ws.basis.read, ws.grid.i2);
  dump("basis_memory.csv", ws.basis.memory, ws.grid.i2);
  m.results() = {{"n1", ws.basis.n1()},
                 {"n2", ws.basis.n2()},
                 {"omega_f_write_mhz", rad_ns_to_mhz(ws.basis.spec.omega_f_write)},
                 {"omega_f_read_mhz", rad_ns_to_mhz(ws.basis.spec.omega_f_read)}};
  m.write(dir / "manifest.json");
  return 0;
}

// ---------------------------------------------------------------- optimize

int run_optimize(const Workspace& ws, const fs::path& dir, Manifest& m) {
  const ControlProblem p = make_control_problem(ws);
  try {
    const ControlSolution sol = optimize(p, ws.cfg.optimizer);
    const fs::path file = dir / "coefficients.csv";
    write_coefficient_table(file, solution_table(sol.coeffs, ws.cfg.system.kappa,
                                                 "optimized " + ws.cfg.preset));
    m.add_output(file);
    m.results()["optimizer"] = {{"s_target", sol.s_target},
                                {"objective", sol.objective_value},
                                {"converged", sol.converged},
                                {"iterations", sol.iterations},
                                {"best_restart", sol.best_restart},
                                {"residuals", residual_json(sol.residuals)},
                                {"metrics", metrics_json(sol.metrics)}};
    std::printf("optimize: S = %.6g, objective = %.6g, efficiency = %.4f / %.4f, power ratio = %.4f\n",
                sol.s_target, sol.objective_value, sol.metrics.efficiency[0],
                sol.metrics.efficiency[1], sol.metrics.power_ratio);
    return 0;
  } catch (const InfeasibleError& e) {
    m.results()["optimizer"] = {{"infeasible", e.what()}};
    m.write(dir / "manifest.json");
    throw;
  }
}

int cmd_optimize(const RunConfig& cfg) {
  const Workspace ws = make_workspace(cfg);
  const fs::path dir = out_dir(cfg);
  Manifest m("optimize", cfg);
  run_optimize(ws, dir, m);
  m.write(dir / "manifest.json");
  return 0;
}

// ---------------------------------------------------------------- retrieve

struct RetrieveArgs {
  std::string solution;
  std::string alpha = "1";
  std::string beta = "0";
  std::optional<double> noise_rel;
  std::optional<std::size_t> n;
  std::string sweep = "none";
  std::size_t n_theta = 21;
  std::size_t n_phi = 41;
};

std::vector<double> default_amplitudes(double kappa) {
  std::vector<double> d;
  for (int i = 1; i <= 10; ++i) d.push_back(0.01 * i * kappa);
  return d;
}

void write_amplitudes(const fs::path& file, Manifest& m, const AmplitudeSweep& s, double kappa) {
  AmplitudeSweep rel = s;
  for (auto& d : rel.delta_eta) d /= kappa;
  rel.slope *= kappa;
  std::ofstream out(file);
  write_amplitude_csv(out, rel);
  out.close();
  m.add_output(file);
  m.results()["amplitude_sweep"] = {{"slope_per_rel", rel.slope}, {"r_squared", rel.r_squared}};
}

int cmd_retrieve(RunConfig cfg, const RetrieveArgs& a) {
  if (a.noise_rel) cfg.noise_rel = *a.noise_rel;
  if (a.n) cfg.noise.n_realizations = *a.n;
  cfg.validate();
  const Workspace ws = make_workspace(cfg);
  const std::string source = a.solution.empty() ? cfg.table : a.solution;
  if (source.empty()) throw ConfigError("--solution: no coefficient source");
  const ControlCoefficients c = load_coefficients(source, cfg.system.kappa);
  const NoiseHarness h(ws.ens, ws.kernel, ws.basis, c);
  const NoiseSpec spec = cfg.resolved_noise();
  const fs::path dir = out_dir(cfg);
  Manifest m("retrieve", cfg);
  m.results()["solution"] = source;
  m.results()["cond"] = h.matrices().cond;
  if (a.sweep == "none") {
    SweepPoint p;
    p.input = {parse_complex(a.alpha, "--alpha"), parse_complex(a.beta, "--beta")};
    p.result = h.run(p.input, spec);
    p.bloch = bloch_vector({p.result.mean_alpha, p.result.mean_beta});
    const fs::path file = dir / "retrieval.csv";
    std::ofstream out(file);
    write_sweep_csv(out, std::span<const SweepPoint>(&p, 1));
    out.close();
    m.add_output(file);
    m.results()["eps_alpha"] = p.result.eps_alpha;
    m.results()["eps_beta"] = p.result.eps_beta;
    std::printf("retrieve: alpha_R = %.6g%+.6gi, beta_R = %.6g%+.6gi, eps = %.3g / %.3g\n",
                p.result.mean_alpha.real(), p.result.mean_alpha.imag(), p.result.mean_beta.real(),
                p.result.mean_beta.imag(), p.result.eps_alpha, p.result.eps_beta);
  } else if (a.sweep == "fig3") {
    const auto pts = qubit_sweep(h, spec, a.n_theta, a.n_phi);
    const fs::path file = dir / "retrieval.csv";
    std::ofstream out(file);
    write_sweep_csv(out, pts);
    out.close();
    m.add_output(file);
    m.results()["max_eps"] = max_error(pts);
    std::printf("retrieve: max error over %zu points = %.4g\n", pts.size(), max_error(pts));
  } else if (a.sweep == "noise-amplitudes") {
    const auto s = amplitude_sweep(h, spec, default_amplitudes(cfg.system.kappa), a.n_theta, a.n_phi);
    write_amplitudes(dir / "noise_sweep.csv", m, s, cfg.system.kappa);
    std::printf("retrieve: linear fit R^2 = %.6f\n", s.r_squared);
  } else {
    throw ConfigError("--sweep: expected none, fig3 or noise-amplitudes");
  }
  m.write(dir / "manifest.json");
  return 0;
}

int cmd_noise_sweep(const RunConfig& cfg, const RetrieveArgs& a) {
  RetrieveArgs b = a;
  b.sweep = "noise-amplitudes";
  return cmd_retrieve(cfg, b);
}

// --------------------------------------------------------------- reproduce

int reproduce_case_a(const RunConfig& cfg) {
  const Workspace ws = make_workspace(cfg);
  const fs::path dir = out_dir(cfg);
  Manifest m("reproduce case-a", cfg);
  const ControlCoefficients tabulated = load_coefficients("table1", cfg.system.kappa);
  write_csv(dir / "table_ket0.csv", m, simulate_protocol(ws, tabulated.xi0, tabulated.zeta));
  write_csv(dir / "table_ket1.csv", m, simulate_protocol(ws, tabulated.xi1, tabulated.zeta));
  const ControlProblem p = make_control_problem(ws);
  m.results()["table_metrics"] = metrics_json(control_metrics(p, tabulated));
  run_optimize(ws, dir, m);
  const ControlCoefficients opt = load_coefficients((dir / "coefficients.csv").string(), cfg.system.kappa);
  write_csv(dir / "optimized_ket0.csv", m, simulate_protocol(ws, opt.xi0, opt.zeta));
  write_csv(dir / "optimized_ket1.csv", m, simulate_protocol(ws, opt.xi1, opt.zeta));
  m.write(dir / "manifest.json");
  return 0;
}

int reproduce_case_b(const RunConfig& cfg) {
  const Workspace ws = make_workspace(cfg);
  const fs::path dir = out_dir(cfg);
  Manifest m("reproduce case-b", cfg);
  const ControlCoefficients tabulated = load_coefficients("table2", cfg.system.kappa);
  const std::vector<cplx> no_read(ws.basis.n2(), 0.0);
  const Trajectory decay = simulate_protocol(ws, tabulated.xi0, no_read);
  write_csv(dir / "free_decay.csv", m, decay);
  const DecayFit fit = fit_peak_envelope(decay, ws.grid.time(ws.grid.i2), ws.grid.time(ws.grid.i3));
  m.results()["free_decay"] = {{"amplitude_rate_per_ns", fit.rate},
                               {"amplitude_lifetime_ns", 1.0 / fit.rate},
                               {"energy_lifetime_ns", fit.energy_lifetime()},
                               {"peaks", fit.n_peaks},
                               {"decoherence_estimate_per_ns", decoherence_estimate(cfg.system, ws.density)}};
  std::printf("case-b: free-decay 1/e time of |A| = %.1f ns\n", 1.0 / fit.rate);
  write_csv(dir / "table_ket0.csv", m, simulate_protocol(ws, tabulated.xi0, tabulated.zeta));
  write_csv(dir / "table_ket1.csv", m, simulate_protocol(ws, tabulated.xi1, tabulated.zeta));
  run_optimize(ws, dir, m);
  m.write(dir / "manifest.json");
  return 0;
}

int reproduce_fig3(const RunConfig& cfg, const RetrieveArgs& a) {
  const Workspace ws = make_workspace(cfg);
  const fs::path dir = out_dir(cfg);
  Manifest m("reproduce fig3", cfg);
  const std::string source = a.solution.empty() ? cfg.table : a.solution;
  const ControlCoefficients c = load_coefficients(source, cfg.system.kappa);
  m.results()["solution"] = source;

  // Rebit readout responses, x = 0, 0.25, ..., 1, each normalized to unit peak.
  const fs::path rebit = dir / "rebit_responses.csv";
  {
    std::vector<Trajectory> resp;
    for (int k = 0; k <= 4; ++k) {
      const Superposition s = rebit_params(0.25 * k, +1);
      resp.push_back(assemble_read(c.zeta, encode(s, c), ws.basis));
    }
    std::ofstream out(rebit);
    out << "t_ns,x0,x025,x05,x075,x1\n";
    char buf[64];
    for (std::size_t n = 0; n < resp[0].size(); ++n) {
      std::snprintf(buf, sizeof buf, "%.17g", resp[0].time(n));
      out << buf;
      for (const auto& r : resp) {
        double peak = 0.0;
        for (const auto& v : r.samples) peak = std::max(peak, std::abs(v));
        std::snprintf(buf, sizeof buf, ",%.17g", peak > 0.0 ? std::abs(r.samples[n]) / peak : 0.0);
        out << buf;
      }
      out << "\n";
    }
  }
  m.add_output(rebit);

  const NoiseHarness h(ws.ens, ws.kernel, ws.basis, c);
  const NoiseSpec spec = cfg.resolved_noise();
  const auto pts = qubit_sweep(h, spec, a.n_theta, a.n_phi);
  const fs::path sweep = dir / "fig3_sweep.csv";
  {
    std::ofstream out(sweep);
    write_sweep_csv(out, pts);
  }
  m.add_output(sweep);
  m.results()["max_eps"] = max_error(pts);
  const auto s = amplitude_sweep(h, spec, default_amplitudes(cfg.system.kappa), a.n_theta, a.n_phi);
  write_amplitudes(dir / "noise_sweep.csv", m, s, cfg.system.kappa);
  std::printf("fig3: max error %.4g at delta_eta/eta0 = %.3g; linear fit R^2 = %.6f\n",
              max_error(pts), cfg.noise_rel, s.r_squared);
  m.write(dir / "manifest.json");
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const InfeasibleError*>(&e)) return 3;
  if (dynamic_cast<const RetrievalDegeneracyError*>(&e)) return 4;
  if (dynamic_cast<const NumericalInstabilityError*>(&e)) return 5;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinmem: pulse-shaped storage in an inhomogeneous spin ensemble"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  SimulateArgs sim;
  RetrieveArgs ret;
  std::string target;

  auto* simulate = app.add_subcommand("simulate", "simulate one write/readout pulse pair");
  add_common(simulate, common);
  simulate->add_option("--pulse", sim.pulse, "zero, table, or <table>-ket0/1 (e.g. table1-ket0)");
  simulate->add_option("--coeffs", sim.coeffs, "coefficient table file or table1/table2");
  simulate->add_option("--state", sim.state, "0 or 1")->check(CLI::Range(0, 1));
  simulate->add_flag("--no-readout", sim.no_readout, "omit the readout pulse");

  auto* basis = app.add_subcommand("basis", "export basis responses");
  add_common(basis, common);

  auto* optimize_cmd = app.add_subcommand("optimize", "optimize write and readout pulses");
  add_common(optimize_cmd, common);

  auto add_retrieve_opts = [&](CLI::App* sub, bool with_point) {
    sub->add_option("--solution", ret.solution, "coefficient table file or table1/table2");
    sub->add_option("--noise-rel", ret.noise_rel, "noise amplitude relative to kappa");
    sub->add_option("--n", ret.n, "noise realizations");
    sub->add_option("--n-theta", ret.n_theta, "theta grid points");
    sub->add_option("--n-phi", ret.n_phi, "phi grid points");
    if (with_point) {
      sub->add_option("--alpha", ret.alpha, "alpha as re or re,im");
      sub->add_option("--beta", ret.beta, "beta as re or re,im");
      sub->add_option("--sweep", ret.sweep, "none, fig3 or noise-amplitudes");
    }
  };
  auto* retrieve_cmd = app.add_subcommand("retrieve", "encode, simulate and retrieve a superposition");
  add_common(retrieve_cmd, common);
  add_retrieve_opts(retrieve_cmd, true);

  auto* noise_cmd = app.add_subcommand("noise-sweep", "retrieval error against noise amplitude");
  add_common(noise_cmd, common);
  add_retrieve_opts(noise_cmd, false);

  auto* reproduce = app.add_subcommand("reproduce", "regenerate a published data set");
  add_common(reproduce, common);
  add_retrieve_opts(reproduce, false);
  reproduce->add_option("target", target, "case-a, case-b or fig3")
      ->required()
      ->check(CLI::IsMember({"case-a", "case-b", "fig3"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(resolve(common), sim);
    if (basis->parsed()) return cmd_basis(resolve(common));
    if (optimize_cmd->parsed()) return cmd_optimize(resolve(common));
    if (retrieve_cmd->parsed()) return cmd_retrieve(resolve(common), ret);
    if (noise_cmd->parsed()) return cmd_noise_sweep(resolve(common), ret);
    if (reproduce->parsed()) {
      if (target == "case-a") return reproduce_case_a(resolve(common, "paper-case-a"));
      if (target == "case-b") return reproduce_case_b(resolve(common, "paper-case-b"));
      RunConfig cfg = resolve(common, "paper-case-a");
      if (ret.noise_rel) cfg.noise_rel = *ret.noise_rel;
      if (ret.n) cfg.noise.n_realizations = *ret.n;
      return reproduce_fig3(cfg, ret);
    }
  } catch (const std::exception& e) {
    std::cerr << "spinmem: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 1;
}

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

#include "spinmem/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "spinmem/errors.hpp"
#include "spinmem/hash.hpp"
#include "spinmem/noise.hpp"
#include "spinmem/parallel.hpp"
#include "spinmem/rng.hpp"

namespace spinmem {

Workspace make_workspace(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.threads != 0) set_thread_count(cfg.threads);
  const SpinDensity density = make_density(cfg);
  Ensemble ens = Ensemble::make(cfg.system, density, discretize(density, cfg.n_freq));
  const GridLayout grid = snap_to_grid(cfg.layout, cfg.dt);
  const double horizon = static_cast<double>(grid.i3) * cfg.dt;
  KernelTable kernel = cfg.kernel_cache.empty()
                           ? kernel_table(ens, cfg.dt, horizon)
                           : kernel_table_cached(ens, cfg.dt, horizon, cfg.kernel_cache);
  BasisSet basis = build_basis(grid, cfg.basis, ens, kernel);
  return {cfg, density, std::move(ens), grid, std::move(kernel), std::move(basis)};
}

ControlProblem make_control_problem(const Workspace& ws) {
  ControlProblem p = make_problem(ws.basis, ws.cfg.system.kappa);
  p.s_target = ws.cfg.s_target;
  p.suppression_budget = ws.cfg.suppression_budget;
  p.endpoint_budget = ws.cfg.endpoint_budget;
  p.separation_tolerance = ws.cfg.separation_tolerance;
  return p;
}

ControlCoefficients load_coefficients(const std::string& source, double kappa) {
  if (source == "table1" || source == "table2") return to_absolute(bundled_table(source), kappa);
  return to_absolute(read_coefficient_table(std::filesystem::path(source)), kappa);
}

CoefficientTable solution_table(const ControlCoefficients& c, double kappa,
                                const std::string& comment) {
  const double pz = c.zeta.empty() ? 0.0 : normalized_power(c.zeta);
  const double scale_zeta = pz > 0.0 ? std::sqrt(pz) / kappa : 1.0;
  CoefficientTable t = to_table(c, kappa, 1.0, scale_zeta, false);
  t.comment = comment;
  return t;
}

Trajectory simulate_protocol(const Workspace& ws, std::span<const cplx> xi,
                             std::span<const cplx> zeta) {
  const auto sections = protocol_sections(ws.basis, xi, zeta);
  return propagate_sections(ws.ens, ws.kernel, ws.grid.t1, sections).full;
}

Trajectory kick_response(const Ensemble& ens, const KernelTable& kernel, std::size_t n) {
  if (n < 2) throw ConfigError("kick_response: need at least two samples");
  if (kernel.steps() + 1 < n) throw ConfigError("kick_response: kernel table too short");
  std::vector<cplx> kick(n, 0.0);
  kick[1] = 1.0;
  return solve_volterra(kernel, impulse_term(ens.params, kick, kernel.dt), {});
}

double DecayFit::energy_lifetime() const {
  return rate > 0.0 ? 0.5 / rate : std::numeric_limits<double>::infinity();
}

DecayFit fit_peak_envelope(const Trajectory& traj, double t_begin, double t_end) {
  std::vector<double> ts, ys;
  const auto& a = traj.samples;
  for (std::size_t m = 1; m + 1 < a.size(); ++m) {
    const double t = traj.time(m);
    if (t < t_begin || t > t_end) continue;
    const double v = std::abs(a[m]);
    if (v > std::abs(a[m - 1]) && v >= std::abs(a[m + 1]) && v > 0.0) {
      ts.push_back(t);
      ys.push_back(std::log(v));
    }
  }
  DecayFit fit;
  fit.n_peaks = ts.size();
  if (ts.size() < 2) throw NumericalInstabilityError("fit_peak_envelope: fewer than two peaks in the window");
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    my += ys[i];
  }
  mt /= static_cast<double>(ts.size());
  my /= static_cast<double>(ts.size());
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    sty += (ts[i] - mt) * (ys[i] - my);
  }
  const double slope = sty / stt;
  fit.rate = -slope;
  fit.intercept = my - slope * mt;
  return fit;
}

std::uint64_t file_digest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  Fnv1a h;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h.bytes(buf, static_cast<std::size_t>(in.gcount()));
  return h.digest();
}

Manifest::Manifest(std::string command, const RunConfig& cfg) {
  doc_["command"] = std::move(command);
  doc_["version"] = kVersion;
  doc_["config"] = to_json(cfg);
  doc_["config_hash"] = hex64(config_hash(cfg));
  doc_["rng"] = kRngAlgorithm;
  doc_["seeds"] = {{"optimizer", cfg.optimizer.seed}, {"noise", cfg.noise.seed}};
  doc_["results"] = nlohmann::json::object();
  doc_["outputs"] = nlohmann::json::object();
}

void Manifest::add_output(const std::filesystem::path& file) {
  doc_["outputs"][file.filename().string()] = hex64(file_digest(file));
}

void Manifest::write(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << doc_.dump(2) << "\n";
}

}  // namespace spinmem

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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "spinmem/basis.hpp"
#include "spinmem/coeff_table.hpp"
#include "spinmem/config.hpp"
#include "spinmem/kernel.hpp"
#include "spinmem/optimizer.hpp"
#include "spinmem/solver.hpp"

// Orchestration shared by the command-line tool and the acceptance checks.

namespace spinmem {

inline constexpr const char* kVersion = "1.0.0";

/// Everything derived from a configuration before any pulse is chosen.
struct Workspace {
  RunConfig cfg;
  SpinDensity density;
  Ensemble ens;
  GridLayout grid;
  KernelTable kernel;
  BasisSet basis;
};

/// Density, frequency grid, kernel table (cached when cfg.kernel_cache is
/// set) and basis responses. Also applies cfg.threads.
Workspace make_workspace(const RunConfig& cfg);

ControlProblem make_control_problem(const Workspace& ws);

/// "table1", "table2" or a coefficient-table file path.
ControlCoefficients load_coefficients(const std::string& source, double kappa);

/// Export with write coefficients in units of kappa and the readout scaled to
/// unit normalized power, matching the bundled tables.
CoefficientTable solution_table(const ControlCoefficients& c, double kappa,
                                const std::string& comment = {});

/// Write pulse xi, then readout pulse zeta, over the whole protocol.
Trajectory simulate_protocol(const Workspace& ws, std::span<const cplx> xi,
                             std::span<const cplx> zeta);

/// Response to a unit kick of the cavity amplitude at t = dt, n samples.
Trajectory kick_response(const Ensemble& ens, const KernelTable& kernel, std::size_t n);

/// Least-squares line through log|A| at the local maxima of |A| with
/// t in [t_begin, t_end]; rate is the decay rate of |A|.
struct DecayFit {
  double rate = 0.0;
  double intercept = 0.0;
  std::size_t n_peaks = 0;
  /// 1/e time of |A|^2, i.e. 1 / (2 rate); infinite for rate <= 0.
  double energy_lifetime() const;
};

DecayFit fit_peak_envelope(const Trajectory& traj, double t_begin, double t_end);

/// Run record: command, version, configuration and its hash, seeds, RNG
/// algorithm, results and the FNV-1a digest of every output file. Contains
/// nothing that varies between identical runs.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg);
  nlohmann::json& results() { return doc_["results"]; }
  void add_output(const std::filesystem::path& file);
  void write(const std::filesystem::path& file) const;
  const nlohmann::json& json() const { return doc_; }

 private:
  nlohmann::json doc_;
};

std::uint64_t file_digest(const std::filesystem::path& file);

}  // namespace spinmem

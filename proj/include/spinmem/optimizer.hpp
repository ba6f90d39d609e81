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
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "spinmem/basis.hpp"
#include "spinmem/coeff_table.hpp"
#include "spinmem/sqp.hpp"

namespace spinmem {

/// Pulse separation problem over the Gram matrices of a basis. State |0>
/// is assigned to bin [tau_a, tau_b] and |1> to [tau_b, tau_c].
struct ControlProblem {
  GramMatrices gram;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double amp_scale = 1.0;  ///< coefficient unit, normally kappa
  /// Readout energy S in amplitude^2 ns; <= 0 selects the largest S that
  /// keeps the separation objective within separation_tolerance * S.
  double s_target = 0.0;
  /// Write power (1/2) sum |xi|^2 in absolute units; <= 0 means amp_scale^2.
  double p_target = 0.0;
  double suppression_budget = 1e-3;  ///< delay energy <= budget * S
  /// Bound on |A(tau_a)|^2; <= 0 means 1e-3 * S / (tau_c - tau_a).
  double endpoint_budget = 0.0;
  double separation_tolerance = 0.01;
};

ControlProblem make_problem(const BasisSet& basis, double amp_scale);

/// Layout of the real variable vector used by objective() gradients:
/// [Re xi0, Im xi0, Re xi1, Im xi1, Re zeta, Im zeta].
Eigen::VectorXd pack(const ControlCoefficients& c);
ControlCoefficients unpack(const Eigen::VectorXd& x, std::size_t n1, std::size_t n2);

/// Separation functional
///   int_{tau_b}^{tau_c} |A_0|^2 + int_{tau_a}^{tau_b} |A_1|^2
///   + sqrt(|int_{tau_a}^{tau_c} conj(A_0) A_1|^2 + eps^2) - eps,  eps = 1e-12 S,
/// with its gradient in absolute units.
std::pair<double, Eigen::VectorXd> objective(const ControlProblem& problem,
                                             const ControlCoefficients& c, double s_value);

/// Named residuals: equalities are value - target, inequalities are
/// value - budget (feasible when <= 0).
struct ConstraintResiduals {
  std::vector<std::pair<std::string, double>> equalities;
  std::vector<std::pair<std::string, double>> inequalities;
  double max_violation() const;
};

ConstraintResiduals constraints(const ControlProblem& problem, const ControlCoefficients& c,
                                double s_value);

/// Diagnostics of a coefficient set on a problem.
struct ControlMetrics {
  double bin_energy[2][2] = {{0, 0}, {0, 0}};  ///< [state][bin]
  double readout_energy[2] = {0, 0};           ///< int over [tau_a, tau_c] |A_i|^2
  double write_energy[2] = {0, 0};             ///< int over the write section |A_i^(W)|^2
  double efficiency[2] = {0, 0};               ///< readout_energy / write_energy
  double cross_overlap = 0.0;                  ///< |O_01| / sqrt(E_0 E_1) over [tau_a, tau_c]
  double power_ratio = 0.0;                    ///< P_R / P_W (state 0)
};

ControlMetrics control_metrics(const ControlProblem& problem, const ControlCoefficients& c);

struct OptimizerOptions {
  std::uint64_t seed = 1;
  int restarts = 8;
  SqpOptions sqp;
};

struct ControlSolution {
  ControlCoefficients coeffs;
  double s_target = 0.0;
  double objective_value = 0.0;
  ConstraintResiduals residuals;
  ControlMetrics metrics;
  bool converged = false;
  int iterations = 0;
  int best_restart = -1;
};

/// Multi-start SQP. Deterministic for fixed (seed, restarts) regardless of
/// the thread count. Throws InfeasibleError when no restart reaches a
/// feasible point.
ControlSolution optimize(const ControlProblem& problem, const OptimizerOptions& options);

}  // namespace spinmem

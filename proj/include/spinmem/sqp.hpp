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
#include <functional>

#include <Eigen/Core>

// Dense sequential quadratic programming for small smooth problems
//
//   min f(x)  s.t.  c_eq(x) = 0,  c_in(x) <= 0.
//
// Exact (eigenvalue-modified) or damped BFGS Lagrangian Hessian, QP subproblems solved
// by active-set enumeration on the KKT system, and an L1 exact-penalty merit
// function with backtracking.

namespace spinmem {

struct NlpProblem {
  Eigen::Index n = 0;
  Eigen::Index n_eq = 0;
  Eigen::Index n_in = 0;
  /// f(x) and its gradient.
  std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)> objective;
  /// Constraint values and Jacobian rows (n_eq x n); may be empty when n_eq == 0.
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& c, Eigen::MatrixXd& jac)> eq;
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& c, Eigen::MatrixXd& jac)> in;
  /// Optional Hessian of f + lambda'c_eq + mu'c_in. When absent a damped
  /// BFGS approximation is used.
  std::function<void(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
                     const Eigen::VectorXd& mu, Eigen::MatrixXd& hess)>
      hessian;
};

struct SqpOptions {
  int max_iterations = 2000;
  double kkt_tol = 1e-8;  ///< relative to max(1, |grad f|_inf)
  double feasibility_tol = 1e-10;
};

struct SqpResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd lambda_eq;
  Eigen::VectorXd mu_in;
  double kkt_residual = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  bool converged = false;
};

SqpResult sqp_minimize(const NlpProblem& problem, const Eigen::VectorXd& x0,
                       const SqpOptions& options = {});

/// Convex QP min 1/2 d'Hd + g'd s.t. A d + a = 0, C d + c <= 0, with H
/// positive definite. Returns false when no active set yields a KKT point.
bool solve_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& a,
              const Eigen::VectorXd& av, const Eigen::MatrixXd& c, const Eigen::VectorXd& cv,
              Eigen::VectorXd& d, Eigen::VectorXd& lambda, Eigen::VectorXd& mu);

}  // namespace spinmem

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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "spinmem/units.hpp"

namespace spinmem {

/// Normalized pulse coefficients as stored on disk. Each family is divided
/// by its amplitude scale, which is given in units of kappa.
///
/// File layout:
///   # amp_scale_kappa: xi0=1 xi1=1 zeta=0.26
///   # power_normalized: true
///   role,re,im
///   xi0(1),0.434,0.103
///   ...
struct CoefficientTable {
  std::vector<cplx> xi0;
  std::vector<cplx> xi1;
  std::vector<cplx> zeta;
  double scale_xi0 = 1.0;
  double scale_xi1 = 1.0;
  double scale_zeta = 1.0;
  bool power_normalized = false;
  std::string comment;
};

/// Absolute coefficients in rad/ns.
struct ControlCoefficients {
  std::vector<cplx> xi0;
  std::vector<cplx> xi1;
  std::vector<cplx> zeta;
};

/// (1/2) sum |c|^2 of normalized coefficients.
double normalized_power(const std::vector<cplx>& c);

/// Parses a table; throws ConfigError naming the line on malformed input and,
/// when power_normalized is set, if a family's normalized power is off by
/// more than power_tol.
CoefficientTable read_coefficient_table(std::istream& in, double power_tol = 0.01);
CoefficientTable read_coefficient_table(const std::filesystem::path& path,
                                        double power_tol = 0.01);

void write_coefficient_table(std::ostream& out, const CoefficientTable& table);
void write_coefficient_table(const std::filesystem::path& path, const CoefficientTable& table);

ControlCoefficients to_absolute(const CoefficientTable& table, double kappa);

/// Normalizes each family by the given scales (units of kappa).
CoefficientTable to_table(const ControlCoefficients& c, double kappa, double scale_xi,
                          double scale_zeta, bool power_normalized);

/// Readout-to-write power ratio P_R / P_W of absolute coefficients, using
/// the given write family.
double power_ratio(const std::vector<cplx>& zeta, const std::vector<cplx>& xi);

/// Directory holding the bundled coefficient tables. SPINMEM_DATA_DIR in the
/// environment takes precedence over the build-time location.
std::filesystem::path data_dir();

/// Bundled tables: "table1" (no holes) and "table2" (burned holes).
CoefficientTable bundled_table(const std::string& name);

}  // namespace spinmem

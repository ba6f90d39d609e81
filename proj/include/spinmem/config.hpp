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
#include <string>
#include <vector>

#include <json.hpp>

#include "spinmem/basis.hpp"
#include "spinmem/model.hpp"
#include "spinmem/noise.hpp"
#include "spinmem/optimizer.hpp"

// Run configuration. Files use JSON with linear frequencies in MHz and times
// in ns; in memory everything is rad/ns and ns. Schema (all keys optional,
// unknown keys rejected):
//
//   preset        "paper-case-a" | "paper-case-b" (applied first)
//   system        omega_c_mhz omega_p_mhz omega_s_mhz kappa_mhz gamma_mhz Omega_mhz
//   density       q fwhm_mhz renormalize_after_holes support_half_width_mhz n_points
//   holes[]       center_mhz width_mhz depth
//   layout        t1_ns t2_ns t3_ns tau_a_ns tau_b_ns tau_c_ns
//   numerics      dt_ns threads kernel_cache
//   basis         n1 n2 omega_f_write_mhz omega_f_read_mhz
//   optimizer     seed restarts s_target suppression_budget endpoint_budget
//                 separation_tolerance max_iterations kkt_tol
//   noise         delta_eta_rel realizations seed kind(complex|real) window(all|write)
//   retrieval     table
//   output_dir

namespace spinmem {

struct RunConfig {
  std::string preset;
  SystemParams system = SystemParams::paper_defaults();
  double q = 1.39;
  double fwhm = mhz_to_rad_ns(9.4);
  bool renormalize_after_holes = false;
  double support_half_width = 0.0;  ///< <= 0: density default
  std::size_t n_freq = 20000;
  std::vector<HoleSpec> holes;
  SectionLayout layout = SectionLayout::paper_case_a();
  double dt = 0.05;
  unsigned threads = 0;
  std::string kernel_cache;  ///< directory; empty disables caching
  BasisSpec basis;
  OptimizerOptions optimizer;
  double s_target = 0.0;
  double suppression_budget = 1e-3;
  double endpoint_budget = 0.0;
  double separation_tolerance = 0.01;
  double noise_rel = 0.05;  ///< delta_eta / eta_0 with eta_0 = kappa
  NoiseSpec noise;
  std::string table;  ///< bundled coefficient table paired with the preset
  std::string output_dir = "out";

  /// Noise spec with delta_eta resolved from noise_rel.
  NoiseSpec resolved_noise() const;
  void validate() const;
};

/// Presets reproduce the two published configurations. Throws ConfigError
/// for unknown names.
RunConfig preset_config(const std::string& name);

/// Overlay a JSON document on `base`. Errors name the offending field.
RunConfig apply_json(const RunConfig& base, const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);

/// FNV-1a of the canonical JSON dump.
std::uint64_t config_hash(const RunConfig& cfg);

SpinDensity make_density(const RunConfig& cfg);

}  // namespace spinmem

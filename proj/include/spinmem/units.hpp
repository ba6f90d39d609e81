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

#include <complex>
#include <numbers>

// Internal units: time in ns, angular frequencies and rates in rad/ns.
// Configuration files and CLI flags use linear frequencies in MHz.

namespace spinmem {

using cplx = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Linear frequency in MHz to angular frequency in rad/ns.
constexpr double mhz_to_rad_ns(double mhz) { return kTwoPi * mhz * 1e-3; }

/// Angular frequency in rad/ns to linear frequency in MHz.
constexpr double rad_ns_to_mhz(double rad_ns) { return rad_ns / kTwoPi * 1e3; }

}  // namespace spinmem

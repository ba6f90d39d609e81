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

#include "spinmem/coeff_table.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "spinmem/errors.hpp"

namespace spinmem {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, int line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ConfigError("coefficient table line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

void parse_scales(const std::string& body, CoefficientTable& t, int line) {
  std::istringstream in(body);
  std::string item;
  while (in >> item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = item.substr(0, eq);
    const double v = parse_double(item.substr(eq + 1), line);
    if (!(v > 0.0)) throw ConfigError("coefficient table: amplitude scale must be positive");
    if (key == "xi0") t.scale_xi0 = v;
    else if (key == "xi1") t.scale_xi1 = v;
    else if (key == "zeta") t.scale_zeta = v;
    else throw ConfigError("coefficient table line " + std::to_string(line) + ": unknown family '" + key + "'");
  }
}

void write_family(std::ostream& out, const char* name, const std::vector<cplx>& v) {
  char buf[128];
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%s(%zu),%.17g,%.17g\n", name, k + 1, v[k].real(), v[k].imag());
    out << buf;
  }
}

}  // namespace

double normalized_power(const std::vector<cplx>& c) {
  double p = 0.0;
  for (const cplx& x : c) p += std::norm(x);
  return 0.5 * p;
}

CoefficientTable read_coefficient_table(std::istream& in, double power_tol) {
  CoefficientTable t;
  std::map<std::string, std::map<std::size_t, cplx>> families;
  std::string raw;
  int line = 0;
  bool header = false;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty()) continue;
    if (s[0] == '#') {
      const std::string body = trim(s.substr(1));
      if (body.rfind("amp_scale_kappa:", 0) == 0) {
        parse_scales(body.substr(16), t, line);
      } else if (body.rfind("power_normalized:", 0) == 0) {
        t.power_normalized = trim(body.substr(17)) == "true";
      } else if (t.comment.empty()) {
        t.comment = body;
      }
      continue;
    }
    if (!header) {
      if (s != "role,re,im") {
        throw ConfigError("coefficient table line " + std::to_string(line) + ": expected header role,re,im");
      }
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(s);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(trim(c));
    if (cells.size() != 3) {
      throw ConfigError("coefficient table line " + std::to_string(line) + ": expected 3 columns");
    }
    const auto open = cells[0].find('(');
    const auto close = cells[0].find(')');
    if (open == std::string::npos || close != cells[0].size() - 1 || close <= open + 1) {
      throw ConfigError("coefficient table line " + std::to_string(line) + ": bad role '" + cells[0] + "'");
    }
    const std::string name = cells[0].substr(0, open);
    const double k = parse_double(cells[0].substr(open + 1, close - open - 1), line);
    if (name != "xi0" && name != "xi1" && name != "zeta") {
      throw ConfigError("coefficient table line " + std::to_string(line) + ": unknown role '" + name + "'");
    }
    if (k < 1 || k != std::floor(k)) {
      throw ConfigError("coefficient table line " + std::to_string(line) + ": bad index");
    }
    auto& fam = families[name];
    if (!fam.emplace(static_cast<std::size_t>(k), cplx(parse_double(cells[1], line),
                                                       parse_double(cells[2], line))).second) {
      throw ConfigError("coefficient table line " + std::to_string(line) + ": duplicate " + cells[0]);
    }
  }
  if (!header) throw ConfigError("coefficient table: missing header");
  for (auto& [name, fam] : families) {
    std::vector<cplx> v;
    for (const auto& [k, c] : fam) {
      if (k != v.size() + 1) throw ConfigError("coefficient table: " + name + " has a gap at index " + std::to_string(v.size() + 1));
      v.push_back(c);
    }
    (name == "xi0" ? t.xi0 : name == "xi1" ? t.xi1 : t.zeta) = std::move(v);
  }
  if (t.xi0.empty() || t.xi1.empty() || t.xi0.size() != t.xi1.size()) {
    throw ConfigError("coefficient table: xi0 and xi1 must be present with equal length");
  }
  if (t.power_normalized) {
    for (const auto* fam : {&t.xi0, &t.xi1, &t.zeta}) {
      if (fam->empty()) continue;
      const double p = normalized_power(*fam);
      if (std::abs(p - 1.0) > power_tol) {
        throw ConfigError("coefficient table: normalized power " + std::to_string(p) + " violates the power constraint");
      }
    }
  }
  return t;
}

CoefficientTable read_coefficient_table(const std::filesystem::path& path, double power_tol) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open coefficient table " + path.string());
  return read_coefficient_table(in, power_tol);
}

void write_coefficient_table(std::ostream& out, const CoefficientTable& t) {
  if (!t.comment.empty()) out << "# " << t.comment << "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "# amp_scale_kappa: xi0=%.17g xi1=%.17g zeta=%.17g\n", t.scale_xi0,
                t.scale_xi1, t.scale_zeta);
  out << buf;
  out << "# power_normalized: " << (t.power_normalized ? "true" : "false") << "\n";
  out << "role,re,im\n";
  write_family(out, "xi0", t.xi0);
  write_family(out, "xi1", t.xi1);
  write_family(out, "zeta", t.zeta);
}

void write_coefficient_table(const std::filesystem::path& path, const CoefficientTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_coefficient_table(out, t);
}

ControlCoefficients to_absolute(const CoefficientTable& t, double kappa) {
  auto scale = [](const std::vector<cplx>& v, double s) {
    std::vector<cplx> out(v);
    for (auto& c : out) c *= s;
    return out;
  };
  return {scale(t.xi0, t.scale_xi0 * kappa), scale(t.xi1, t.scale_xi1 * kappa),
          scale(t.zeta, t.scale_zeta * kappa)};
}

CoefficientTable to_table(const ControlCoefficients& c, double kappa, double scale_xi,
                          double scale_zeta, bool power_normalized) {
  auto scale = [](const std::vector<cplx>& v, double s) {
    std::vector<cplx> out(v);
    for (auto& x : out) x /= s;
    return out;
  };
  CoefficientTable t;
  t.xi0 = scale(c.xi0, scale_xi * kappa);
  t.xi1 = scale(c.xi1, scale_xi * kappa);
  t.zeta = scale(c.zeta, scale_zeta * kappa);
  t.scale_xi0 = t.scale_xi1 = scale_xi;
  t.scale_zeta = scale_zeta;
  t.power_normalized = power_normalized;
  return t;
}

double power_ratio(const std::vector<cplx>& zeta, const std::vector<cplx>& xi) {
  const double pw = normalized_power(xi);
  if (!(pw > 0.0)) throw ConfigError("power_ratio: write pulse has zero power");
  return normalized_power(zeta) / pw;
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("SPINMEM_DATA_DIR"); env && *env) return env;
  return SPINMEM_DATA_DIR;
}

CoefficientTable bundled_table(const std::string& name) {
  if (name != "table1" && name != "table2") throw ConfigError("unknown bundled table '" + name + "'");
  return read_coefficient_table(data_dir() / (name + ".csv"));
}

}  // namespace spinmem

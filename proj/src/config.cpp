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

#include "spinmem/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

#include "spinmem/errors.hpp"
#include "spinmem/hash.hpp"

namespace spinmem {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + "." + key + ": unknown field");
  }
}

template <class T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type (" + std::string(it->type_name()) + ")");
  }
}

void read_mhz(const json& obj, const std::string& where, const char* key, double& out) {
  if (!obj.contains(key)) return;
  double mhz = 0.0;
  read(obj, where, key, mhz);
  out = mhz_to_rad_ns(mhz);
}

}  // namespace

NoiseSpec RunConfig::resolved_noise() const {
  NoiseSpec s = noise;
  s.delta_eta = noise_rel * system.kappa;
  return s;
}

void RunConfig::validate() const {
  system.validate();
  if (!(q > 1.0 && q < 3.0)) throw ConfigError("density.q: must lie in (1, 3)");
  if (!(fwhm > 0.0)) throw ConfigError("density.fwhm_mhz: must be positive");
  if (n_freq < 16) throw ConfigError("density.n_points: must be at least 16");
  for (const auto& h : holes) h.validate();
  layout.validate();
  if (!(dt > 0.0)) throw ConfigError("numerics.dt_ns: must be positive");
  if (basis.n1 < 1 || basis.n2 < 1) throw ConfigError("basis: n1 and n2 must be at least 1");
  if (optimizer.restarts < 1) throw ConfigError("optimizer.restarts: must be at least 1");
  if (!(suppression_budget >= 0.0)) throw ConfigError("optimizer.suppression_budget: must be >= 0");
  if (!(separation_tolerance > 0.0)) throw ConfigError("optimizer.separation_tolerance: must be > 0");
  if (!(noise_rel >= 0.0)) throw ConfigError("noise.delta_eta_rel: must be >= 0");
  if (noise.n_realizations < 1) throw ConfigError("noise.realizations: must be at least 1");
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper-case-a") {
    c.layout = SectionLayout::paper_case_a();
    c.basis.n1 = 5;
    c.basis.n2 = 10;
    c.table = "table1";
  } else if (name == "paper-case-b") {
    c.holes = default_holes(c.system);
    c.layout = SectionLayout::paper_case_b();
    c.basis.n1 = 4;
    c.basis.n2 = 60;
    c.table = "table2";
  } else {
    throw ConfigError("preset: unknown name '" + name + "' (expected paper-case-a or paper-case-b)");
  }
  return c;
}

RunConfig apply_json(const RunConfig& base, const json& doc) {
  check_keys(doc, "config",
             {"preset", "system", "density", "holes", "layout", "numerics", "basis", "optimizer",
              "noise", "retrieval", "output_dir"});
  RunConfig c = base;
  if (doc.contains("preset")) {
    std::string name;
    read(doc, "config", "preset", name);
    c = preset_config(name);
  }
  if (doc.contains("system")) {
    const json& s = doc["system"];
    check_keys(s, "system",
               {"omega_c_mhz", "omega_p_mhz", "omega_s_mhz", "kappa_mhz", "gamma_mhz", "Omega_mhz"});
    read_mhz(s, "system", "omega_c_mhz", c.system.omega_c);
    read_mhz(s, "system", "omega_p_mhz", c.system.omega_p);
    read_mhz(s, "system", "omega_s_mhz", c.system.omega_s);
    read_mhz(s, "system", "kappa_mhz", c.system.kappa);
    read_mhz(s, "system", "gamma_mhz", c.system.gamma);
    read_mhz(s, "system", "Omega_mhz", c.system.Omega);
  }
  if (doc.contains("density")) {
    const json& d = doc["density"];
    check_keys(d, "density",
               {"q", "fwhm_mhz", "renormalize_after_holes", "support_half_width_mhz", "n_points"});
    read(d, "density", "q", c.q);
    read_mhz(d, "density", "fwhm_mhz", c.fwhm);
    read(d, "density", "renormalize_after_holes", c.renormalize_after_holes);
    read_mhz(d, "density", "support_half_width_mhz", c.support_half_width);
    read(d, "density", "n_points", c.n_freq);
  }
  if (doc.contains("holes")) {
    const json& hs = doc["holes"];
    if (!hs.is_array()) throw ConfigError("holes: expected an array");
    c.holes.clear();
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const std::string where = "holes[" + std::to_string(i) + "]";
      check_keys(hs[i], where, {"center_mhz", "width_mhz", "depth"});
      if (!hs[i].contains("center_mhz")) throw ConfigError(where + ".center_mhz: missing");
      HoleSpec h{0.0, mhz_to_rad_ns(0.2), 1.0};
      read_mhz(hs[i], where, "center_mhz", h.center);
      read_mhz(hs[i], where, "width_mhz", h.width);
      read(hs[i], where, "depth", h.depth);
      c.holes.push_back(h);
    }
  }
  if (doc.contains("layout")) {
    const json& l = doc["layout"];
    check_keys(l, "layout", {"t1_ns", "t2_ns", "t3_ns", "tau_a_ns", "tau_b_ns", "tau_c_ns"});
    read(l, "layout", "t1_ns", c.layout.t1);
    read(l, "layout", "t2_ns", c.layout.t2);
    read(l, "layout", "t3_ns", c.layout.t3);
    read(l, "layout", "tau_a_ns", c.layout.tau_a);
    read(l, "layout", "tau_b_ns", c.layout.tau_b);
    read(l, "layout", "tau_c_ns", c.layout.tau_c);
  }
  if (doc.contains("numerics")) {
    const json& n = doc["numerics"];
    check_keys(n, "numerics", {"dt_ns", "threads", "kernel_cache"});
    read(n, "numerics", "dt_ns", c.dt);
    read(n, "numerics", "threads", c.threads);
    read(n, "numerics", "kernel_cache", c.kernel_cache);
  }
  if (doc.contains("basis")) {
    const json& b = doc["basis"];
    check_keys(b, "basis", {"n1", "n2", "omega_f_write_mhz", "omega_f_read_mhz"});
    read(b, "basis", "n1", c.basis.n1);
    read(b, "basis", "n2", c.basis.n2);
    read_mhz(b, "basis", "omega_f_write_mhz", c.basis.omega_f_write);
    read_mhz(b, "basis", "omega_f_read_mhz", c.basis.omega_f_read);
  }
  if (doc.contains("optimizer")) {
    const json& o = doc["optimizer"];
    check_keys(o, "optimizer",
               {"seed", "restarts", "s_target", "suppression_budget", "endpoint_budget",
                "separation_tolerance", "max_iterations", "kkt_tol"});
    read(o, "optimizer", "seed", c.optimizer.seed);
    read(o, "optimizer", "restarts", c.optimizer.restarts);
    read(o, "optimizer", "s_target", c.s_target);
    read(o, "optimizer", "suppression_budget", c.suppression_budget);
    read(o, "optimizer", "endpoint_budget", c.endpoint_budget);
    read(o, "optimizer", "separation_tolerance", c.separation_tolerance);
    read(o, "optimizer", "max_iterations", c.optimizer.sqp.max_iterations);
    read(o, "optimizer", "kkt_tol", c.optimizer.sqp.kkt_tol);
  }
  if (doc.contains("noise")) {
    const json& n = doc["noise"];
    check_keys(n, "noise", {"delta_eta_rel", "realizations", "seed", "kind", "window"});
    read(n, "noise", "delta_eta_rel", c.noise_rel);
    read(n, "noise", "realizations", c.noise.n_realizations);
    read(n, "noise", "seed", c.noise.seed);
    std::string kind = c.noise.kind == NoiseKind::real_only ? "real" : "complex";
    std::string window = c.noise.window == NoiseWindow::write_only ? "write" : "all";
    read(n, "noise", "kind", kind);
    read(n, "noise", "window", window);
    if (kind != "complex" && kind != "real") throw ConfigError("noise.kind: expected complex or real");
    if (window != "all" && window != "write") throw ConfigError("noise.window: expected all or write");
    c.noise.kind = kind == "real" ? NoiseKind::real_only : NoiseKind::complex_circular;
    c.noise.window = window == "write" ? NoiseWindow::write_only : NoiseWindow::all_sections;
  }
  if (doc.contains("retrieval")) {
    check_keys(doc["retrieval"], "retrieval", {"table"});
    read(doc["retrieval"], "retrieval", "table", c.table);
  }
  read(doc, "config", "output_dir", c.output_dir);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return apply_json(RunConfig{}, doc);
}

json to_json(const RunConfig& c) {
  auto mhz = [](double w) { return rad_ns_to_mhz(w); };
  json holes = json::array();
  for (const auto& h : c.holes) {
    holes.push_back({{"center_mhz", mhz(h.center)}, {"width_mhz", mhz(h.width)}, {"depth", h.depth}});
  }
  json doc;
  doc["preset"] = c.preset;
  doc["system"] = {{"omega_c_mhz", mhz(c.system.omega_c)}, {"omega_p_mhz", mhz(c.system.omega_p)},
                   {"omega_s_mhz", mhz(c.system.omega_s)}, {"kappa_mhz", mhz(c.system.kappa)},
                   {"gamma_mhz", mhz(c.system.gamma)},     {"Omega_mhz", mhz(c.system.Omega)}};
  doc["density"] = {{"q", c.q},
                    {"fwhm_mhz", mhz(c.fwhm)},
                    {"renormalize_after_holes", c.renormalize_after_holes},
                    {"support_half_width_mhz", mhz(c.support_half_width)},
                    {"n_points", c.n_freq}};
  doc["holes"] = holes;
  doc["layout"] = {{"t1_ns", c.layout.t1},       {"t2_ns", c.layout.t2},
                   {"t3_ns", c.layout.t3},       {"tau_a_ns", c.layout.tau_a},
                   {"tau_b_ns", c.layout.tau_b}, {"tau_c_ns", c.layout.tau_c}};
  // Thread count and cache location do not affect results.
  doc["numerics"] = {{"dt_ns", c.dt}};
  doc["basis"] = {{"n1", c.basis.n1},
                  {"n2", c.basis.n2},
                  {"omega_f_write_mhz", mhz(c.basis.omega_f_write)},
                  {"omega_f_read_mhz", mhz(c.basis.omega_f_read)}};
  doc["optimizer"] = {{"seed", c.optimizer.seed},
                      {"restarts", c.optimizer.restarts},
                      {"s_target", c.s_target},
                      {"suppression_budget", c.suppression_budget},
                      {"endpoint_budget", c.endpoint_budget},
                      {"separation_tolerance", c.separation_tolerance},
                      {"max_iterations", c.optimizer.sqp.max_iterations},
                      {"kkt_tol", c.optimizer.sqp.kkt_tol}};
  doc["noise"] = {{"delta_eta_rel", c.noise_rel},
                  {"realizations", c.noise.n_realizations},
                  {"seed", c.noise.seed},
                  {"kind", c.noise.kind == NoiseKind::real_only ? "real" : "complex"},
                  {"window", c.noise.window == NoiseWindow::write_only ? "write" : "all"}};
  doc["retrieval"] = {{"table", c.table}};
  doc["output_dir"] = c.output_dir;
  return doc;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("output_dir");
  Fnv1a h;
  h.text(doc.dump());
  return h.digest();
}

SpinDensity make_density(const RunConfig& cfg) {
  const auto shape = QGaussianShape::from_fwhm(cfg.q, cfg.fwhm);
  return normalize(SpinDensity(shape, cfg.system.omega_s, cfg.holes, cfg.renormalize_after_holes,
                               cfg.support_half_width));
}

}  // namespace spinmem

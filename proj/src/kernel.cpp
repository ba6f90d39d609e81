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

#include "spinmem/kernel.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <system_error>

#include "exp_weights.hpp"
#include "spinmem/errors.hpp"
#include "spinmem/hash.hpp"
#include "spinmem/parallel.hpp"

namespace spinmem {

namespace {

using detail::kDegenerateGap;
using detail::psi1;
using detail::psi2;

// Lags per independent block. Each block re-anchors its exponentials with an
// exact exp, which bounds recurrence drift and makes blocks parallel.
constexpr std::size_t kLagBlock = 256;

constexpr std::uint32_t kCacheVersion = 1;
constexpr char kCacheMagic[8] = {'S', 'P', 'M', 'K', 'E', 'R', 'N', 'L'};

cplx spin_rate(const SystemParams& p, double omega) { return {p.gamma, omega - p.omega_p}; }
cplx cavity_rate(const SystemParams& p) { return {p.kappa, p.delta_c()}; }

// out[r][L] = sum_k coeff[r][k] exp(-z[k] L) for L in [0, n_lags).
// Structure of arrays so the k loops vectorize.
std::vector<std::vector<cplx>> exp_sums(const std::vector<cplx>& z,
                                        const std::vector<std::vector<cplx>>& coeff,
                                        std::size_t n_lags) {
  const std::size_t nk = z.size();
  const std::size_t nr = coeff.size();
  std::vector<std::vector<cplx>> out(nr, std::vector<cplx>(n_lags));
  if (nk == 0 || n_lags == 0) return out;

  std::vector<double> wr(nk), wi(nk);
  for (std::size_t k = 0; k < nk; ++k) {
    const cplx w = std::exp(-z[k]);
    wr[k] = w.real();
    wi[k] = w.imag();
  }
  std::vector<std::vector<double>> cr(nr, std::vector<double>(nk)), ci = cr;
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t k = 0; k < nk; ++k) {
      cr[r][k] = coeff[r][k].real();
      ci[r][k] = coeff[r][k].imag();
    }
  }

  const std::size_t n_blocks = (n_lags + kLagBlock - 1) / kLagBlock;
  parallel_for(n_blocks, [&](std::size_t b) {
    const std::size_t l0 = b * kLagBlock;
    const std::size_t l1 = std::min(n_lags, l0 + kLagBlock);
    std::vector<double> er(nk), ei(nk);
    for (std::size_t k = 0; k < nk; ++k) {
      const cplx e = std::exp(-z[k] * static_cast<double>(l0));
      er[k] = e.real();
      ei[k] = e.imag();
    }
    double* __restrict pr = er.data();
    double* __restrict pi = ei.data();
    const double* __restrict qr = wr.data();
    const double* __restrict qi = wi.data();
    for (std::size_t l = l0; l < l1; ++l) {
      for (std::size_t r = 0; r < nr; ++r) {
        const double* __restrict ar = cr[r].data();
        const double* __restrict ai = ci[r].data();
        double sr = 0.0, si = 0.0;
#pragma omp simd reduction(+ : sr, si)
        for (std::size_t k = 0; k < nk; ++k) {
          sr += ar[k] * pr[k] - ai[k] * pi[k];
          si += ar[k] * pi[k] + ai[k] * pr[k];
        }
        out[r][l] = {sr, si};
      }
#pragma omp simd
      for (std::size_t k = 0; k < nk; ++k) {
        const double xr = pr[k] * qr[k] - pi[k] * qi[k];
        const double xi = pr[k] * qi[k] + pi[k] * qr[k];
        pr[k] = xr;
        pi[k] = xi;
      }
    }
  });
  return out;
}

// 8-point Gauss-Legendre on [0, 1].
struct UnitGauss {
  std::array<double, 8> x{};
  std::array<double, 8> w{};
  UnitGauss() {
    static constexpr std::array<double, 4> xs = {0.1834346424956498, 0.5255324099163290,
                                                 0.7966664774136267, 0.9602898564975363};
    static constexpr std::array<double, 4> ws = {0.3626837833783620, 0.3137066458778873,
                                                 0.2223810344533745, 0.1012285362903763};
    for (int i = 0; i < 4; ++i) {
      x[i] = 0.5 * (1.0 - xs[i]);
      x[7 - i] = 0.5 * (1.0 + xs[i]);
      w[i] = w[7 - i] = 0.5 * ws[i];
    }
  }
};

void write_array(std::ofstream& out, const std::vector<cplx>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(cplx)));
}

}  // namespace

Ensemble Ensemble::make(const SystemParams& params, const SpinDensity& density,
                        FrequencyGrid grid) {
  params.validate();
  if (grid.points.size() != grid.weights.size()) {
    throw ConfigError("frequency grid: points and weights differ in length");
  }
  Ensemble ens{params, std::move(grid), {}};
  ens.mass.resize(ens.grid.size());
  for (std::size_t k = 0; k < ens.mass.size(); ++k) {
    ens.mass[k] = ens.grid.weights[k] * density_at(density, ens.grid.points[k]);
  }
  return ens;
}

cplx kernel_mode(cplx s, cplx s_c, double x) {
  const cplx delta = s - s_c;
  const cplx w = -delta * x;
  if (std::abs(w) < 0.5) return -x * std::exp(-s_c * x) * detail::expm1_over(w);
  return (std::exp(-s * x) - std::exp(-s_c * x)) / delta;
}

cplx kernel_value(const Ensemble& ens, double lag) {
  const auto& p = ens.params;
  const cplx s_c = cavity_rate(p);
  cplx sum = 0.0;
  for (std::size_t k = 0; k < ens.size(); ++k) {
    sum += ens.mass[k] * kernel_mode(spin_rate(p, ens.grid.points[k]), s_c, lag);
  }
  return p.Omega * p.Omega * sum;
}

KernelTable kernel_table(const Ensemble& ens, double dt, double horizon) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw ConfigError("kernel_table: need dt > 0");
  const auto& p = ens.params;
  const std::size_t steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  const std::size_t n = steps + 1;
  const double omega2 = p.Omega * p.Omega;
  const cplx s_c = cavity_rate(p);
  const cplx z_c = s_c * dt;

  std::vector<cplx> z;
  std::vector<std::vector<cplx>> coeff(3);
  std::vector<std::size_t> degenerate;
  for (std::size_t k = 0; k < ens.size(); ++k) {
    const cplx s = spin_rate(p, ens.grid.points[k]);
    const cplx delta = s - s_c;
    if (std::abs(delta) < kDegenerateGap) {
      degenerate.push_back(k);
      continue;
    }
    const cplx a = omega2 * ens.mass[k] / delta;
    z.push_back(s * dt);
    coeff[0].push_back(a);
    coeff[1].push_back(a * dt * psi1(s * dt));
    coeff[2].push_back(a * dt * psi1(-s * dt));
  }
  const auto sums = exp_sums(z, coeff, n);

  KernelTable t;
  t.dt = dt;
  t.values.assign(n, 0.0);
  t.right_half.assign(n, 0.0);
  t.left_half.assign(n, 0.0);
  // sums[0][0] is sum_k a_k in the same reduction order as every other lag,
  // so the cavity part cancels exactly at zero lag.
  const cplx a_sum = z.empty() ? cplx(0.0) : sums[0][0];
  const cplx r_c = dt * psi1(z_c) * a_sum;
  const cplx l_c = dt * psi1(-z_c) * a_sum;
  for (std::size_t l = 0; l < n; ++l) {
    if (z.empty()) break;
    const cplx ec = std::exp(-z_c * static_cast<double>(l));
    t.values[l] = sums[0][l] - ec * a_sum;
    t.right_half[l] = sums[1][l] - ec * r_c;
    if (l > 0) t.left_half[l] = sums[2][l] - ec * l_c;
  }

  if (!degenerate.empty()) {
    const UnitGauss gl;
    for (std::size_t k : degenerate) {
      const cplx s = spin_rate(p, ens.grid.points[k]);
      const double m = omega2 * ens.mass[k];
      for (std::size_t l = 0; l < n; ++l) {
        const double x = static_cast<double>(l) * dt;
        t.values[l] += m * kernel_mode(s, s_c, x);
        cplx rh = 0.0, lh = 0.0;
        for (int g = 0; g < 8; ++g) {
          const double u = gl.x[g] * dt;
          rh += gl.w[g] * (1.0 - gl.x[g]) * kernel_mode(s, s_c, x + u);
          if (l > 0) lh += gl.w[g] * (1.0 - gl.x[g]) * kernel_mode(s, s_c, x - u);
        }
        t.right_half[l] += m * dt * rh;
        t.left_half[l] += m * dt * lh;
      }
    }
  }
  t.values[0] = 0.0;
  t.left_half[0] = 0.0;
  return t;
}

std::uint64_t kernel_cache_key(const Ensemble& ens, double dt, std::size_t steps) {
  Fnv1a h;
  h.value(kCacheVersion);
  const auto& p = ens.params;
  for (double v : {p.omega_c, p.omega_p, p.omega_s, p.kappa, p.gamma, p.Omega, dt}) h.value(v);
  h.value(steps);
  h.range(std::span<const double>(ens.grid.points));
  h.range(std::span<const double>(ens.grid.weights));
  h.range(std::span<const double>(ens.mass));
  return h.digest();
}

void save_kernel_table(const KernelTable& table, std::uint64_t key,
                       const std::filesystem::path& file) {
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write kernel cache " + tmp);
    const std::uint64_t n = table.values.size();
    out.write(kCacheMagic, sizeof kCacheMagic);
    out.write(reinterpret_cast<const char*>(&kCacheVersion), sizeof kCacheVersion);
    out.write(reinterpret_cast<const char*>(&key), sizeof key);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&table.dt), sizeof table.dt);
    write_array(out, table.values);
    write_array(out, table.right_half);
    write_array(out, table.left_half);
    if (!out) throw std::runtime_error("short write to kernel cache " + tmp);
  }
  std::filesystem::rename(tmp, file);
}

std::optional<KernelTable> load_kernel_table(std::uint64_t key,
                                             const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[sizeof kCacheMagic];
  std::uint32_t version = 0;
  std::uint64_t stored_key = 0, n = 0;
  KernelTable t;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&stored_key), sizeof stored_key);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&t.dt), sizeof t.dt);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0 || version != kCacheVersion ||
      stored_key != key || n > (std::uint64_t{1} << 32)) {
    return std::nullopt;
  }
  for (auto* v : {&t.values, &t.right_half, &t.left_half}) {
    v->resize(n);
    in.read(reinterpret_cast<char*>(v->data()), static_cast<std::streamsize>(n * sizeof(cplx)));
  }
  if (!in) return std::nullopt;
  return t;
}

KernelTable kernel_table_cached(const Ensemble& ens, double dt, double horizon,
                                const std::filesystem::path& cache_dir) {
  const std::size_t steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  const std::uint64_t key = kernel_cache_key(ens, dt, steps);
  const auto file = cache_dir / ("kernel_" + hex64(key) + ".bin");
  if (auto hit = load_kernel_table(key, file)) return *std::move(hit);
  KernelTable t = kernel_table(ens, dt, horizon);
  std::error_code ec;
  std::filesystem::create_directories(cache_dir, ec);
  if (!ec) {
    try {
      save_kernel_table(t, key, file);
    } catch (const std::exception&) {
      // A cache that cannot be written is not an error.
    }
  }
  return t;
}

std::vector<cplx> driving_term(const SystemParams& params, std::span<const cplx> eta, double dt) {
  std::vector<cplx> d(eta.size(), 0.0);
  if (eta.empty()) return d;
  const cplx z = cavity_rate(params) * dt;
  const cplx decay = std::exp(-z);
  const cplx w1 = dt * psi1(z);
  const cplx w2 = dt * psi2(z);
  for (std::size_t m = 0; m + 1 < eta.size(); ++m) {
    d[m + 1] = decay * d[m] - (w1 * eta[m + 1] + w2 * eta[m]);
  }
  return d;
}

std::vector<cplx> impulse_term(const SystemParams& params, std::span<const cplx> kicks,
                               double dt) {
  std::vector<cplx> n(kicks.size(), 0.0);
  const cplx decay = std::exp(-cavity_rate(params) * dt);
  cplx acc = 0.0;
  for (std::size_t m = 0; m < kicks.size(); ++m) {
    acc = (m == 0 ? cplx(0.0) : decay * acc) + kicks[m];
    n[m] = acc;
  }
  return n;
}

MemoryState MemoryState::empty(std::size_t n_freq) {
  return {cplx(0.0), std::vector<cplx>(n_freq, 0.0)};
}

MemoryState memory_handoff(const MemoryState& prev, std::span<const cplx> prev_samples,
                           double dt, const Ensemble& ens) {
  const std::size_t nk = ens.size();
  if (prev.memory_integral.size() != nk) {
    throw ConfigError("memory_handoff: memory state does not match the frequency grid");
  }
  MemoryState next;
  next.boundary_amp = prev_samples.empty() ? prev.boundary_amp : prev_samples.back();
  std::vector<double> ir(nk), ii(nk), wr(nk), wi(nk), ar(nk), ai(nk), br(nk), bi(nk);
  for (std::size_t k = 0; k < nk; ++k) {
    const cplx z = spin_rate(ens.params, ens.grid.points[k]) * dt;
    const cplx w = std::exp(-z), a = dt * psi1(z), b = dt * psi2(z);
    ir[k] = prev.memory_integral[k].real();
    ii[k] = prev.memory_integral[k].imag();
    wr[k] = w.real();
    wi[k] = w.imag();
    ar[k] = a.real();
    ai[k] = a.imag();
    br[k] = b.real();
    bi[k] = b.imag();
  }
  double* __restrict pr = ir.data();
  double* __restrict pi = ii.data();
  for (std::size_t m = 0; m + 1 < prev_samples.size(); ++m) {
    const double x0r = prev_samples[m].real(), x0i = prev_samples[m].imag();
    const double x1r = prev_samples[m + 1].real(), x1i = prev_samples[m + 1].imag();
#pragma omp simd
    for (std::size_t k = 0; k < nk; ++k) {
      const double yr = pr[k] * wr[k] - pi[k] * wi[k] + ar[k] * x1r - ai[k] * x1i +
                        br[k] * x0r - bi[k] * x0i;
      const double yi = pr[k] * wi[k] + pi[k] * wr[k] + ar[k] * x1i + ai[k] * x1r +
                        br[k] * x0i + bi[k] * x0r;
      pr[k] = yr;
      pi[k] = yi;
    }
  }
  next.memory_integral.resize(nk);
  for (std::size_t k = 0; k < nk; ++k) next.memory_integral[k] = {ir[k], ii[k]};
  return next;
}

std::vector<MemoryState> memory_handoff(std::span<const MemoryState> prev,
                                        std::span<const std::vector<cplx>> samples, double dt,
                                        const Ensemble& ens) {
  if (prev.size() != samples.size()) throw ConfigError("memory_handoff: batch size mismatch");
  std::vector<MemoryState> out(prev.size());
  parallel_for(prev.size(), [&](std::size_t s) {
    out[s] = memory_handoff(prev[s], samples[s], dt, ens);
  });
  return out;
}

std::vector<std::vector<cplx>> memory_term(std::span<const MemoryState> states,
                                           const Ensemble& ens, double dt, std::size_t count) {
  const auto& p = ens.params;
  const double omega2 = p.Omega * p.Omega;
  const cplx s_c = cavity_rate(p);
  const std::size_t ns = states.size();
  for (const auto& st : states) {
    if (st.memory_integral.size() != ens.size()) {
      throw ConfigError("memory_term: memory state does not match the frequency grid");
    }
  }

  std::vector<cplx> z;
  std::vector<std::vector<cplx>> coeff(ns);
  std::vector<std::size_t> degenerate;
  for (std::size_t k = 0; k < ens.size(); ++k) {
    const cplx s = spin_rate(p, ens.grid.points[k]);
    const cplx delta = s - s_c;
    if (std::abs(delta) < kDegenerateGap) {
      degenerate.push_back(k);
      continue;
    }
    z.push_back(s * dt);
    const cplx a = omega2 * ens.mass[k] / delta;
    for (std::size_t i = 0; i < ns; ++i) coeff[i].push_back(a * states[i].memory_integral[k]);
  }
  const auto sums = exp_sums(z, coeff, count);

  std::vector<std::vector<cplx>> out(ns, std::vector<cplx>(count, 0.0));
  for (std::size_t i = 0; i < ns; ++i) {
    const cplx b_sum = (z.empty() || count == 0) ? cplx(0.0) : sums[i][0];
    for (std::size_t m = 0; m < count; ++m) {
      const cplx ec = std::exp(-s_c * (static_cast<double>(m) * dt));
      out[i][m] = states[i].boundary_amp * ec + (z.empty() ? cplx(0.0) : sums[i][m] - ec * b_sum);
    }
    for (std::size_t k : degenerate) {
      const cplx s = spin_rate(p, ens.grid.points[k]);
      const cplx c = omega2 * ens.mass[k] * states[i].memory_integral[k];
      for (std::size_t m = 1; m < count; ++m) {
        out[i][m] += c * kernel_mode(s, s_c, static_cast<double>(m) * dt);
      }
    }
  }
  return out;
}

std::vector<cplx> memory_term(const MemoryState& state, const Ensemble& ens, double dt,
                              std::size_t count) {
  return memory_term(std::span<const MemoryState>(&state, 1), ens, dt, count).front();
}

}  // namespace spinmem

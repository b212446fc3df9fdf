#include "kmv/particle_system.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "kmv/aniso_besov.hpp"
#include "kmv/bump.hpp"
#include "kmv/errors.hpp"
#include "kmv/fft.hpp"

namespace kmv {

void ParticleEnsemble::validate() const {
  if (d < 1 || d > 3) throw ContractViolation("ensemble needs d in {1, 2, 3}");
  if (stream.empty()) throw ContractViolation("ensemble needs N >= 1");
  if (z.size() != stream.size() * dim()) throw ContractViolation("ensemble arrays disagree on N");
  for (double v : z)
    if (!std::isfinite(v)) throw ContractViolation("ensemble holds non-finite values");
}

InitialLaw InitialLaw::standard(int d, double sx, double sv) {
  InitialLaw law;
  for (int i = 0; i < d; ++i) {
    law.mean.push_back(0.0);
    law.stddev.push_back(sx);
  }
  for (int i = 0; i < d; ++i) {
    law.mean.push_back(0.0);
    law.stddev.push_back(sv);
  }
  return law;
}

ParticleEnsemble sample_ensemble(int d, std::size_t N, const InitialLaw& law, std::uint64_t seed, int level) {
  if (d < 1 || d > 3) throw ContractViolation("ensemble needs d in {1, 2, 3}");
  if (N == 0) throw ContractViolation("ensemble needs N >= 1");
  if (level < 1) throw ContractViolation("mollification level must be >= 1");
  const auto dim = 2 * static_cast<std::size_t>(d);
  if (law.mean.size() != dim || law.stddev.size() != dim)
    throw ContractViolation("initial law must give 2d means and deviations");
  ParticleEnsemble e;
  e.d = d;
  e.seed = seed;
  e.level = level;
  e.z.resize(N * dim);
  e.stream.resize(N);
  std::iota(e.stream.begin(), e.stream.end(), std::uint64_t{0});
  const CounterRng rng(derive_seed(seed, "initial-law"));
  const double cap = static_cast<double>(level);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t a = 0; a < dim; a += 2) {
      const auto [g1, g2] = rng.normals(i, a / 2);
      e.z[i * dim + a] = std::clamp(law.mean[a] + law.stddev[a] * g1, -cap, cap);
      if (a + 1 < dim) e.z[i * dim + a + 1] = std::clamp(law.mean[a + 1] + law.stddev[a + 1] * g2, -cap, cap);
    }
  }
  return e;
}

Mollifier::Mollifier(std::vector<double> scales) : scales_(std::move(scales)) {
  if (scales_.empty()) throw ContractViolation("mollifier needs at least one axis");
  norm_ = bump_normalizer(scales_.size());
  for (double s : scales_) {
    if (!(s > 0.0)) throw ContractViolation("mollifier bandwidth must be positive");
    norm_ /= s;
  }
}

Mollifier Mollifier::spatial(std::size_t n, double eps) { return Mollifier(std::vector<double>(n, eps)); }

Mollifier Mollifier::kinetic(int d, double eps) {
  std::vector<double> s;
  for (int i = 0; i < d; ++i) s.push_back(eps * eps * eps);
  for (int i = 0; i < d; ++i) s.push_back(eps);
  return Mollifier(std::move(s));
}

Mollifier Mollifier::kinetic_spacetime(int d, double eps) {
  std::vector<double> s{eps * eps};
  for (int i = 0; i < d; ++i) s.push_back(eps * eps * eps);
  for (int i = 0; i < d; ++i) s.push_back(eps);
  return Mollifier(std::move(s));
}

Mollifier Mollifier::from_level(std::size_t n_dims, int level, double c) {
  if (level < 1 || !(c > 0.0)) throw ContractViolation("mollifier level must be >= 1 and c > 0");
  return spatial(n_dims, c / static_cast<double>(level));
}

double Mollifier::operator()(std::span<const double> w) const {
  double r2 = 0.0;
  for (std::size_t i = 0; i < scales_.size(); ++i) {
    const double u = w[i] / scales_[i];
    r2 += u * u;
    if (r2 >= 1.0) return 0.0;
  }
  const double u = 1.0 - r2;
  return norm_ * u * u * u * u;
}

Mollifier Mollifier::leading(std::size_t k) const {
  if (k == 0 || k > scales_.size()) throw ContractViolation("leading: bad axis count");
  return Mollifier(std::vector<double>(scales_.begin(), scales_.begin() + static_cast<long>(k)));
}

namespace {

constexpr std::size_t kMaxDims = 7;
using Cell = std::array<long, kMaxDims>;

// Cell list over the leading `m` coordinates of each row, with cell widths equal to
// the support half-widths. Entries are ordered by cell and then by stream id, so
// neighbor sums do not depend on particle numbering.
class PointIndex {
 public:
  PointIndex(std::span<const double> rows, std::size_t row_len, std::size_t m, std::vector<double> width,
             std::span<const std::uint64_t> stream)
      : rows_(rows), row_len_(row_len), m_(m), width_(std::move(width)) {
    const std::size_t n = rows.size() / row_len;
    entries_.resize(n);
    for (std::size_t i = 0; i < n; ++i) entries_[i] = {cell_of(rows.subspan(i * row_len, m)), stream[i], i};
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
      return a.cell != b.cell ? a.cell < b.cell : a.stream < b.stream;
    });
  }

  Cell cell_of(std::span<const double> p) const {
    Cell c{};
    for (std::size_t a = 0; a < m_; ++a) c[a] = static_cast<long>(std::floor(p[a] / width_[a]));
    return c;
  }

  template <class Fn>
  void for_each_near(std::span<const double> q, Fn&& fn) const {
    const Cell base = cell_of(q);
    std::size_t combos = 1;
    for (std::size_t a = 0; a < m_; ++a) combos *= 3;
    for (std::size_t k = 0; k < combos; ++k) {
      Cell c = base;
      std::size_t rem = k;
      for (std::size_t a = m_; a-- > 0;) {
        c[a] += static_cast<long>(rem % 3) - 1;
        rem /= 3;
      }
      auto lo = std::lower_bound(entries_.begin(), entries_.end(), c,
                                 [](const Entry& e, const Cell& key) { return e.cell < key; });
      for (; lo != entries_.end() && lo->cell == c; ++lo) fn(lo->index);
    }
  }

  std::span<const double> row(std::size_t i) const { return rows_.subspan(i * row_len_, m_); }

 private:
  struct Entry {
    Cell cell;
    std::uint64_t stream;
    std::size_t index;
  };
  std::span<const double> rows_;
  std::size_t row_len_, m_;
  std::vector<double> width_;
  std::vector<Entry> entries_;
};

// KDE over the leading mol.dims() coordinates of the ensemble rows.
std::vector<double> kde_leading(const ParticleEnsemble& ens, std::span<const double> queries, std::size_t q_len,
                                const Mollifier& mol) {
  const std::size_t m = mol.dims();
  const PointIndex index(ens.z, ens.dim(), m, mol.scales(), ens.stream);
  const std::size_t Q = queries.size() / q_len;
  std::vector<double> out(Q, 0.0);
  const double inv_n = 1.0 / static_cast<double>(ens.size());
  const auto Ql = static_cast<long>(Q);
#pragma omp parallel for schedule(dynamic, 64)
  for (long ql = 0; ql < Ql; ++ql) {
    const auto qi = static_cast<std::size_t>(ql);
    const auto q = queries.subspan(qi * q_len, m);
    std::array<double, kMaxDims> w{};
    double s = 0.0;
    index.for_each_near(q, [&](std::size_t j) {
      const auto p = index.row(j);
      for (std::size_t a = 0; a < m; ++a) w[a] = q[a] - p[a];
      s += mol(std::span<const double>(w.data(), m));
    });
    out[qi] = s * inv_n;
  }
  return out;
}

// Stream-sorted particle order for reductions.
std::vector<std::size_t> stream_order(const ParticleEnsemble& ens) {
  std::vector<std::size_t> order(ens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ens.stream[a] < ens.stream[b]; });
  return order;
}

// Fixed symmetric offsets drawn from the bump on R^m (pairs o, -o).
std::vector<std::vector<double>> bump_offsets(std::size_t m, int pairs) {
  std::vector<std::vector<double>> out;
  if (pairs <= 0) {
    out.emplace_back(m, 0.0);
    return out;
  }
  const CounterRng rng(derive_seed(0x4b4d56ULL, "coefficient-offsets"));
  std::uint64_t counter = 0;
  std::vector<double> u(m);
  while (out.size() < 2 * static_cast<std::size_t>(pairs)) {
    for (std::size_t a = 0; a < m; a += 2) {
      const auto [u1, u2] = rng.uniforms(m, counter++);
      u[a] = 2 * u1 - 1;
      if (a + 1 < m) u[a + 1] = 2 * u2 - 1;
    }
    double r2 = 0.0;
    for (double c : u) r2 += c * c;
    const auto [accept, unused] = rng.uniforms(m + 100, counter++);
    (void)unused;
    if (r2 >= 1.0 || accept > std::pow(1.0 - r2, 4)) continue;
    out.push_back(u);
    for (auto& c : u) c = -c;
    out.push_back(u);
  }
  return out;
}

void check_pairs(double pairs, const ParticleOptions& opt, const char* what) {
  if (pairs > opt.pair_budget) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s needs %.3g pair evaluations, above the budget of %.3g", what, pairs,
                  opt.pair_budget);
    throw BudgetExceeded(buf, pairs);
  }
}

// (1/N) sum_j K_n(Z_i - Z_j) through CIC binning and a zero-padded FFT.
void kernel_binned(const ParticleEnsemble& ens, const CoefficientSpec& spec,
                   const std::vector<std::vector<double>>& offsets, double eps, std::size_t bins,
                   const std::vector<std::size_t>& order, std::vector<double>& b) {
  const std::size_t m = ens.dim(), N = ens.size(), d = static_cast<std::size_t>(ens.d);
  std::vector<double> lo(m, 1e300), hi(m, -1e300), h(m);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t a = 0; a < m; ++a) {
      lo[a] = std::min(lo[a], ens.z[i * m + a]);
      hi[a] = std::max(hi[a], ens.z[i * m + a]);
    }
  const std::size_t nodes = bins + 1;
  for (std::size_t a = 0; a < m; ++a) {
    const double span = std::max(hi[a] - lo[a], 1e-9);
    h[a] = span / static_cast<double>(bins);
  }
  std::vector<std::size_t> pshape(m, 2 * nodes);
  std::size_t P = 1;
  for (auto s : pshape) P *= s;
  ComplexArray dens(P, Complex(0.0, 0.0));
  std::vector<std::size_t> pstride(m, 1);
  for (std::size_t a = m - 1; a-- > 0;) pstride[a] = pstride[a + 1] * pshape[a + 1];

  const auto locate = [&](std::span<const double> p, std::vector<std::size_t>& base, std::vector<double>& fr) {
    for (std::size_t a = 0; a < m; ++a) {
      const double q = std::clamp((p[a] - lo[a]) / h[a], 0.0, static_cast<double>(bins));
      base[a] = std::min(static_cast<std::size_t>(q), bins - 1);
      fr[a] = q - static_cast<double>(base[a]);
    }
  };
  std::vector<std::size_t> base(m);
  std::vector<double> fr(m);
  const std::size_t corners = std::size_t{1} << m;
  for (std::size_t i : order) {
    locate(ens.particle(i), base, fr);
    for (std::size_t c = 0; c < corners; ++c) {
      double w = 1.0;
      std::size_t flat = 0;
      for (std::size_t a = 0; a < m; ++a) {
        const bool up = (c >> a) & 1U;
        w *= up ? fr[a] : 1.0 - fr[a];
        flat += (base[a] + (up ? 1 : 0)) * pstride[a];
      }
      dens[flat] += w;
    }
  }
  const auto axes = all_axes(pshape);
  fft_forward(dens, pshape, axes);

  std::vector<ComplexArray> kern(d, ComplexArray(P));
  std::vector<std::size_t> idx(m, 0);
  std::vector<double> w(m), ws(m), kv(d), acc(d);
  for (std::size_t flat = 0; flat < P; ++flat) {
    bool valid = true;
    for (std::size_t a = 0; a < m; ++a) {
      const auto k = static_cast<long>(idx[a]);
      const auto n = static_cast<long>(nodes);
      if (k == n) valid = false;
      w[a] = static_cast<double>(k < n ? k : k - 2 * n) * h[a];
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    if (valid) {
      for (const auto& o : offsets) {
        for (std::size_t a = 0; a < m; ++a) ws[a] = w[a] + eps * o[a];
        spec.drift_kernel(ens.t, ws, kv);
        for (std::size_t c = 0; c < d; ++c) acc[c] += kv[c];
      }
    }
    for (std::size_t c = 0; c < d; ++c) kern[c][flat] = acc[c] / static_cast<double>(offsets.size());
    for (std::size_t a = m; a-- > 0;) {
      if (++idx[a] < pshape[a]) break;
      idx[a] = 0;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(N);
  for (std::size_t c = 0; c < d; ++c) {
    fft_forward(kern[c], pshape, axes);
    for (std::size_t i = 0; i < P; ++i) kern[c][i] *= dens[i];
    fft_inverse(kern[c], pshape, axes);
    for (std::size_t i = 0; i < N; ++i) {
      locate(ens.particle(i), base, fr);
      double v = 0.0;
      for (std::size_t corner = 0; corner < corners; ++corner) {
        double wt = 1.0;
        std::size_t flat = 0;
        for (std::size_t a = 0; a < m; ++a) {
          const bool up = (corner >> a) & 1U;
          wt *= up ? fr[a] : 1.0 - fr[a];
          flat += (base[a] + (up ? 1 : 0)) * pstride[a];
        }
        v += wt * kern[c][flat].real();
      }
      b[i * d + c] += v * inv_n;
    }
  }
}

}  // namespace

std::vector<double> kde_density(const ParticleEnsemble& ens, std::span<const double> queries, const Mollifier& mol) {
  ens.validate();
  if (mol.dims() != ens.dim()) throw ContractViolation("kde_density: mollifier must act on phase space");
  if (queries.size() % ens.dim() != 0) throw ContractViolation("kde_density: queries must be rows of 2d values");
  return kde_leading(ens, queries, ens.dim(), mol);
}

SampledField kde_on_grid(const ParticleEnsemble& ens, const GridDensity& grid, const Mollifier& mol) {
  if (grid.d != ens.d) throw ContractViolation("kde_on_grid: grid and ensemble disagree on d");
  SampledField out(grid.rho.shape(), grid.rho.spacing(), grid.rho.origin());
  out.set_axes(grid.rho.axes());
  std::vector<double> q(out.size() * ens.dim());
  std::size_t k = 0;
  out.fill([&](std::span<const double> z) {
    for (double c : z) q[k++] = c;
    return 0.0;
  });
  out.values() = kde_density(ens, q, mol);
  return out;
}

MollifiedCoefficients mollified_coefficients(const ParticleEnsemble& ens, const CoefficientSpec& spec,
                                             const ParticleOptions& opt) {
  ens.validate();
  if (spec.d != ens.d) throw ContractViolation("coefficient spec and ensemble disagree on d");
  if (!(opt.bandwidth_c > 0.0)) throw ContractViolation("bandwidth constant must be positive");
  const std::size_t N = ens.size(), d = static_cast<std::size_t>(ens.d), m = ens.dim();
  const double eps = opt.bandwidth_c / static_cast<double>(ens.level);
  const auto offsets = bump_offsets(m + 1, opt.offset_pairs);
  const auto M = static_cast<double>(offsets.size());
  const auto order = stream_order(ens);
  const auto Nd = static_cast<double>(N);

  MollifiedCoefficients out;
  out.b.assign(N * d, 0.0);
  out.a.resize(N);

  const bool need_density = spec.drift_uses_density || static_cast<bool>(spec.drift_general);
  if (need_density) out.density = kde_leading(ens, ens.z, m, Mollifier::spatial(m, eps));
  const bool need_mass = spec.diffusion_uses_density || spec.diffusion_local || spec.diffusion_general;
  if (need_mass) out.mass_density = kde_leading(ens, ens.z, m, Mollifier::spatial(d, eps));

  if (spec.drift_general) check_pairs(Nd * Nd * M, opt, "general drift average");
  if (spec.diffusion_general) check_pairs(Nd * Nd * M, opt, "general diffusion average");
  const bool kernel_direct = spec.drift_kernel && N <= opt.direct_threshold;
  if (kernel_direct) check_pairs(Nd * Nd * M, opt, "kernel drift sum");

  const auto Nl = static_cast<long>(N);
#pragma omp parallel
  {
    std::vector<double> z(m), w(m), zp(m), kv(d), acc(d);
#pragma omp for schedule(dynamic, 64)
    for (long il = 0; il < Nl; ++il) {
      const auto i = static_cast<std::size_t>(il);
      const auto zi = ens.particle(i);
      const double r = need_density ? out.density[i] : 0.0;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const auto& o : offsets) {
        for (std::size_t a = 0; a < m; ++a) z[a] = zi[a] + eps * o[a];
        const double rr = r + eps * o[m];
        if (spec.drift_local) {
          spec.drift_local(ens.t, z, rr, kv);
          for (std::size_t c = 0; c < d; ++c) acc[c] += kv[c];
        }
        if (kernel_direct) {
          for (std::size_t j : order) {
            const auto zj = ens.particle(j);
            for (std::size_t a = 0; a < m; ++a) w[a] = z[a] - zj[a];
            spec.drift_kernel(ens.t, w, kv);
            for (std::size_t c = 0; c < d; ++c) acc[c] += kv[c] / Nd;
          }
        }
        if (spec.drift_general) {
          for (std::size_t j : order) {
            spec.drift_general(ens.t, z, rr, ens.particle(j), kv);
            for (std::size_t c = 0; c < d; ++c) acc[c] += kv[c] / Nd;
          }
        }
      }
      for (std::size_t c = 0; c < d; ++c) out.b[i * d + c] = acc[c] / M;

      Matrix A;
      if (spec.diffusion_constant && !spec.diffusion_local && !spec.diffusion_general) {
        A = *spec.diffusion_constant;
      } else {
        A = Matrix::Zero(ens.d, ens.d);
        const double rm = out.mass_density[i];
        for (const auto& o : offsets) {
          for (std::size_t a = 0; a < d; ++a) z[a] = zi[a] + eps * o[a];
          const std::span<const double> x(z.data(), d);
          const double rr = rm + eps * o[m];
          if (spec.diffusion_general) {
            Matrix S = Matrix::Zero(ens.d, ens.d);
            for (std::size_t j : order) S += spec.diffusion_general(ens.t, x, rr, ens.particle(j));
            A += S / Nd;
          } else if (spec.diffusion_local) {
            A += spec.diffusion_local(ens.t, x, rr);
          } else {
            A += *spec.diffusion_constant;
          }
        }
        A /= M;
      }
      out.a[i] = ellipticity_project(A, spec.kappa0, spec.kappa1);
    }
  }

  if (spec.drift_kernel && !kernel_direct) {
    std::size_t bins = opt.fft_bins;
    if (bins == 0) bins = d == 1 ? 128 : (d == 2 ? 24 : 10);
    kernel_binned(ens, spec, offsets, eps, bins, order, out.b);
  }
  return out;
}

ParticleEnsemble em_step(const ParticleEnsemble& ens, const CoefficientSpec& spec, double dt,
                         const ParticleOptions& opt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractViolation("em_step: dt must be positive");
  const auto coef = mollified_coefficients(ens, spec, opt);
  const std::size_t N = ens.size(), d = static_cast<std::size_t>(ens.d), m = ens.dim();
  const bool shared = spec.diffusion_constant && !spec.diffusion_local && !spec.diffusion_general;
  Matrix shared_sigma;
  if (shared) shared_sigma = spd_sqrt(2.0 * coef.a[0]);
  const CounterRng rng(ens.seed);
  const std::size_t blocks = (d + 1) / 2;
  const double sq = std::sqrt(dt);

  ParticleEnsemble out = ens;
  long bad = -1;
  const auto Nl = static_cast<long>(N);
#pragma omp parallel
  {
    Eigen::VectorXd xi(static_cast<Eigen::Index>(d));
#pragma omp for schedule(static)
    for (long il = 0; il < Nl; ++il) {
      const auto i = static_cast<std::size_t>(il);
      const auto zi = ens.particle(i);
      auto zo = out.particle(i);
      for (std::size_t a = 0; a < d; ++a) zo[a] = zi[a] + zi[d + a] * dt;
      for (std::size_t a = 0; a < d; ++a) zo[d + a] = zi[d + a] + coef.b[i * d + a] * dt;
      if (opt.noise) {
        for (std::size_t k = 0; k < blocks; ++k) {
          const auto [g1, g2] = rng.normals(ens.stream[i], ens.step * blocks + k);
          xi(static_cast<Eigen::Index>(2 * k)) = g1;
          if (2 * k + 1 < d) xi(static_cast<Eigen::Index>(2 * k + 1)) = g2;
        }
        const Eigen::VectorXd dw = (shared ? shared_sigma : spd_sqrt(2.0 * coef.a[i])) * xi;
        for (std::size_t a = 0; a < d; ++a) zo[d + a] += dw(static_cast<Eigen::Index>(a)) * sq;
      }
      for (std::size_t a = 0; a < m; ++a) {
        if (!std::isfinite(zo[a])) {
#pragma omp critical
          bad = bad < 0 ? il : std::min(bad, il);
        }
      }
    }
  }
  if (bad >= 0) throw NumericalError("em_step: particle " + std::to_string(bad) + " became non-finite");
  out.t = ens.t + dt;
  out.step = ens.step + 1;
  return out;
}

ParticleTrajectory simulate(const ParticleEnsemble& ens0, const CoefficientSpec& spec, double T, double dt,
                            const SimulateOptions& sim, const ParticleOptions& opt) {
  ens0.validate();
  if (!(dt > 0.0)) throw ContractViolation("simulate: dt must be positive");
  if (!(T >= ens0.t)) throw ContractViolation("simulate: final time before the initial time");
  std::vector<double> targets;
  for (double t : sim.snapshot_times) {
    if (t < ens0.t || t > T) throw ContractViolation("simulate: snapshot time outside [t0, T]");
    if (t > ens0.t) targets.push_back(t);
  }
  targets.push_back(T);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  ParticleTrajectory traj;
  const double eps = opt.bandwidth_c / static_cast<double>(ens0.level);
  const auto record = [&](const ParticleEnsemble& e) {
    traj.snapshots.push_back(e);
    if (sim.kde_grid) traj.densities.push_back(kde_on_grid(e, *sim.kde_grid, Mollifier::spatial(e.dim(), eps)));
  };
  record(ens0);
  if (sim.keep_path) traj.path.push_back(ens0);
  ParticleEnsemble e = ens0;
  const double tol = 1e-12 * std::max(1.0, std::abs(T));
  for (double target : targets) {
    while (e.t < target - tol) {
      e = em_step(e, spec, std::min(dt, target - e.t), opt);
      if (target - e.t <= tol) e.t = target;
      if (sim.keep_path) traj.path.push_back(e);
    }
    record(e);
  }
  return traj;
}

namespace {
constexpr char kMagic[4] = {'K', 'M', 'V', 'E'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ContractViolation("ensemble file truncated");
  return v;
}
}  // namespace

void write_ensemble(std::ostream& os, const ParticleEnsemble& ens) {
  ens.validate();
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(ens.d));
  put(os, static_cast<std::uint64_t>(ens.size()));
  put(os, ens.t);
  put(os, ens.seed);
  os.write(reinterpret_cast<const char*>(ens.z.data()), static_cast<std::streamsize>(ens.z.size() * sizeof(double)));
  if (!os) throw NumericalError("failed to write ensemble");
}

ParticleEnsemble read_ensemble(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw ContractViolation("not an ensemble file (bad magic)");
  if (get<std::uint32_t>(is) != kVersion) throw ContractViolation("unsupported ensemble file version");
  ParticleEnsemble e;
  e.d = static_cast<int>(get<std::uint32_t>(is));
  const auto N = get<std::uint64_t>(is);
  e.t = get<double>(is);
  e.seed = get<std::uint64_t>(is);
  if (e.d < 1 || e.d > 3 || N == 0 || N > (std::uint64_t{1} << 34)) throw ContractViolation("corrupt ensemble header");
  e.z.resize(N * e.dim());
  is.read(reinterpret_cast<char*>(e.z.data()), static_cast<std::streamsize>(e.z.size() * sizeof(double)));
  if (!is) throw ContractViolation("ensemble file truncated");
  e.stream.resize(N);
  std::iota(e.stream.begin(), e.stream.end(), std::uint64_t{0});
  e.validate();
  return e;
}

void write_ensemble(const std::string& path, const ParticleEnsemble& ens) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractViolation("cannot open " + path);
  write_ensemble(os, ens);
}

ParticleEnsemble read_ensemble(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractViolation("cannot open " + path);
  return read_ensemble(is);
}

namespace {

double exact_w2_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Quantile coupling of two empirical measures with uniform weights.
  const double wa = 1.0 / static_cast<double>(a.size()), wb = 1.0 / static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double ra = wa, rb = wb, s = 0.0;
  while (i < a.size() && j < b.size()) {
    const double mass = std::min(ra, rb);
    s += mass * (a[i] - b[j]) * (a[i] - b[j]);
    ra -= mass;
    rb -= mass;
    if (ra <= 1e-15 * wa) {
      ++i;
      ra = wa;
    }
    if (rb <= 1e-15 * wb) {
      ++j;
      rb = wb;
    }
  }
  return std::sqrt(s);
}

std::vector<double> thin(std::span<const double> pts, std::size_t dim, std::size_t max_points) {
  const std::size_t n = pts.size() / dim;
  if (n <= max_points) return {pts.begin(), pts.end()};
  std::vector<double> out;
  out.reserve(max_points * dim);
  for (std::size_t k = 0; k < max_points; ++k) {
    const std::size_t i = k * n / max_points;
    out.insert(out.end(), pts.begin() + static_cast<long>(i * dim), pts.begin() + static_cast<long>((i + 1) * dim));
  }
  return out;
}

// Transport cost <P, C> of the entropic plan between uniform clouds. Matrix
// scaling on exp(-C / reg), with a log-domain pass when the scaling degenerates.
double sinkhorn_cost(const std::vector<double>& a, const std::vector<double>& b, std::size_t dim, double reg,
                     const WassersteinOptions& opt) {
  const std::size_t n = a.size() / dim, m = b.size() / dim;
  std::vector<double> C(n * m), K(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = a[i * dim + k] - b[j * dim + k];
        s += t * t;
      }
      C[i * m + j] = s;
      K[i * m + j] = std::exp(-s / reg);
    }
  const double pa = 1.0 / static_cast<double>(n), pb = 1.0 / static_cast<double>(m);
  std::vector<double> u(n, 1.0), v(m, 1.0), Kv(n), Ku(m);
  bool ok = true;
  for (int it = 0; it < opt.max_iter && ok; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += K[i * m + j] * v[j];
      u[i] = pa / s;
      ok = ok && std::isfinite(u[i]) && s > 0.0;
    }
    std::fill(Ku.begin(), Ku.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) Ku[j] += K[i * m + j] * u[i];
    for (std::size_t j = 0; j < m; ++j) {
      v[j] = pb / Ku[j];
      ok = ok && std::isfinite(v[j]) && Ku[j] > 0.0;
    }
    // Row marginal error after the column update.
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += K[i * m + j] * v[j];
      err += std::abs(u[i] * s - pa);
    }
    if (err < opt.tol) break;
  }
  if (ok) {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) cost += u[i] * K[i * m + j] * v[j] * C[i * m + j];
    if (std::isfinite(cost)) return cost;
  }
  const double la = std::log(pa), lb = std::log(pb);
  std::vector<double> f(n, 0.0), g(m, 0.0);
  for (int it = 0; it < opt.max_iter; ++it) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, (g[j] - C[i * m + j]) / reg + lb);
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp((g[j] - C[i * m + j]) / reg + lb - mx);
      const double nf = -reg * (mx + std::log(s));
      change = std::max(change, std::abs(nf - f[i]));
      f[i] = nf;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double mx = -1e300;
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, (f[i] - C[i * m + j]) / reg + la);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::exp((f[i] - C[i * m + j]) / reg + la - mx);
      const double ng = -reg * (mx + std::log(s));
      change = std::max(change, std::abs(ng - g[j]));
      g[j] = ng;
    }
    if (change < 1e-9 * reg) break;
  }
  double cost = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      cost += std::exp((f[i] + g[j] - C[i * m + j]) / reg + la + lb) * C[i * m + j];
  return cost;
}

}  // namespace

WassersteinResult wasserstein2(std::span<const double> a, std::span<const double> b, std::size_t dim,
                               const WassersteinOptions& opt) {
  if (dim == 0 || a.empty() || b.empty() || a.size() % dim || b.size() % dim)
    throw ContractViolation("wasserstein2: point clouds must be non-empty rows of `dim` values");
  WassersteinResult r;
  if (dim == 1) {
    r.value = exact_w2_1d({a.begin(), a.end()}, {b.begin(), b.end()});
    r.exact = true;
    r.points = std::max(a.size(), b.size());
    return r;
  }
  const auto ta = thin(a, dim, opt.max_points), tb = thin(b, dim, opt.max_points);
  r.points = std::max(ta.size(), tb.size()) / dim;
  double mean_cost = 0.0;
  const std::size_t n = ta.size() / dim, m = tb.size() / dim;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = ta[i * dim + k] - tb[j * dim + k];
        mean_cost += t * t;
      }
  mean_cost /= static_cast<double>(n * m);
  if (mean_cost == 0.0 || ta == tb) return r;
  r.regularization = opt.relative_reg * mean_cost;
  const double ab = sinkhorn_cost(ta, tb, dim, r.regularization, opt);
  const double aa = sinkhorn_cost(ta, ta, dim, r.regularization, opt);
  const double bb = sinkhorn_cost(tb, tb, dim, r.regularization, opt);
  r.value = std::sqrt(std::max(0.0, ab - 0.5 * (aa + bb)));
  return r;
}

WassersteinResult wasserstein2(const ParticleEnsemble& a, const ParticleEnsemble& b, const WassersteinOptions& opt) {
  if (a.dim() != b.dim()) throw ContractViolation("wasserstein2: ensembles disagree on d");
  return wasserstein2(a.z, b.z, a.dim(), opt);
}

double coupling_distance(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  if (a.dim() != b.dim() || a.size() != b.size()) throw ContractViolation("coupling_distance: ensembles differ in shape");
  double s = 0.0;
  for (std::size_t k = 0; k < a.z.size(); ++k) s += (a.z[k] - b.z[k]) * (a.z[k] - b.z[k]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

void check_krylov_exponents(const KrylovExponents& e, int d) {
  const auto a = AnisotropyVector::kinetic(d);
  if (e.p0.size() != a.size()) throw ContractViolation("p0 must have 2d entries");
  if (!(e.q0 >= 1.0) || !e.p0.all_at_least(1.0)) throw ContractViolation("exponents must be at least 1");
  const double lhs1 = 1.0 - e.alpha0, rhs1 = 2.0 / e.q0;
  char buf[256];
  if (!(lhs1 < rhs1)) {
    std::snprintf(buf, sizeof buf, "exponents violate 1 - alpha0 < 2/q0: %.6g >= %.6g", lhs1, rhs1);
    throw PreconditionError(buf);
  }
  const double lhs2 = 2.0 / e.q0 + e.p0.weighted_reciprocal(a), rhs2 = 2.0 - 2.0 * e.alpha0;
  if (!(lhs2 < rhs2)) {
    std::snprintf(buf, sizeof buf, "exponents violate 2/q0 + a.(1/p0) < 2 - 2 alpha0: %.6g >= %.6g", lhs2, rhs2);
    throw PreconditionError(buf);
  }
}

KrylovReport krylov_check(const ParticleTrajectory& traj, const SpaceTimeTest& f, const KrylovExponents& e,
                          double tau, const std::vector<double>& deltas, const NormGrid& grid) {
  if (traj.path.size() < 2) throw ContractViolation("krylov_check needs a stored path");
  const int d = traj.path.front().d;
  check_krylov_exponents(e, d);
  const double t0 = traj.path.front().t, t1 = traj.path.back().t;
  KrylovReport rep;
  rep.deltas = deltas;

  // ||f 1_{[t0, t1]}|| on a space-time grid: L^{q0} in t of the slice norms.
  auto slice = make_phase_grid(d, grid.nx, grid.nv, grid.half_x, grid.half_v);
  const double ht = (t1 - t0) / static_cast<double>(grid.nt);
  std::optional<DyadicPartition> part;
  if (e.alpha0 != 0.0) part = DyadicPartition::for_grid(slice.rho, AnisotropyVector::kinetic(d));
  double acc = 0.0;
  for (std::size_t k = 0; k < grid.nt; ++k) {
    const double t = t0 + (static_cast<double>(k) + 0.5) * ht;
    slice.rho.fill([&](std::span<const double> z) { return f(t, z); });
    const double s = part ? besov_norm(slice.rho, e.alpha0, e.p0, *part).norm : mixed_lp_norm(slice.rho, e.p0);
    acc += std::pow(s, e.q0) * ht;
  }
  const double norm = std::pow(acc, 1.0 / e.q0);

  for (double delta : deltas) {
    if (!(delta > 0.0) || tau < t0 || tau + delta > t1 + 1e-12)
      throw ContractViolation("krylov_check: window outside the stored path");
    double lhs = 0.0;
    for (std::size_t k = 0; k + 1 < traj.path.size(); ++k) {
      const auto& p = traj.path[k];
      const double lo = std::max(p.t, tau), hi = std::min(traj.path[k + 1].t, tau + delta);
      if (hi <= lo) continue;
      double mean = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) mean += f(p.t, p.particle(i));
      lhs += (hi - lo) * mean / static_cast<double>(p.size());
    }
    rep.lhs.push_back(lhs);
    rep.norms.push_back(norm);
    rep.ratios.push_back(norm > 0.0 ? lhs / norm : 0.0);
  }
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (rep.ratios[k] > 0.0) {
      lx.push_back(std::log(deltas[k]));
      ly.push_back(std::log(rep.ratios[k]));
    }
  }
  if (lx.size() < 2) {
    rep.theta = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n, my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  rep.theta = sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

StabilityReport stability_sweep(const CoefficientSpec& spec, const StabilityConfig& cfg, const ParticleOptions& opt) {
  if (cfg.levels.size() < 2) throw ContractViolation("stability_sweep needs at least two levels");
  if (cfg.eval_grid.rho.size() == 0) throw ContractViolation("stability_sweep needs an evaluation grid");
  StabilityReport rep;
  rep.seeds = cfg.seeds;
  rep.monotone_l1 = rep.monotone_coupling = true;
  const int d = spec.d;
  const auto eval = Mollifier::spatial(2 * static_cast<std::size_t>(d), cfg.eval_bandwidth);
  for (std::uint64_t seed : cfg.seeds) {
    std::vector<ParticleEnsemble> finals;
    std::vector<SampledField> dens;
    for (int level : cfg.levels) {
      const auto e0 = sample_ensemble(d, cfg.N, cfg.law, seed, level);
      auto traj = simulate(e0, spec, cfg.T, cfg.dt, {}, opt);
      finals.push_back(std::move(traj.snapshots.back()));
      dens.push_back(kde_on_grid(finals.back(), cfg.eval_grid, eval));
    }
    std::vector<StabilityPair> pairs;
    for (std::size_t k = 0; k + 1 < cfg.levels.size(); ++k) {
      StabilityPair p;
      p.level = cfg.levels[k];
      p.finer = cfg.levels[k + 1];
      p.l1 = l1_distance(dens[k], dens[k + 1]);
      p.w2 = wasserstein2(finals[k], finals[k + 1]).value;
      p.coupling = coupling_distance(finals[k], finals[k + 1]);
      if (!pairs.empty()) {
        rep.monotone_l1 = rep.monotone_l1 && p.l1 < pairs.back().l1;
        rep.monotone_coupling = rep.monotone_coupling && p.coupling < pairs.back().coupling;
      }
      pairs.push_back(p);
    }
    rep.pairs.push_back(std::move(pairs));
  }
  return rep;
}

}  // namespace kmv

#include "kmv/fpk_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "kmv/errors.hpp"
#include "kmv/fft.hpp"

namespace kmv {

namespace {

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

void check_grid(const GridDensity& g) {
  if (g.d < 1 || g.d > 2) throw ContractViolation("grid solver supports d in {1, 2}");
  if (g.rho.ndim() != 2 * static_cast<std::size_t>(g.d))
    throw ContractViolation("grid density must have 2d axes");
}

// Cell-center coordinates of x cell ix (first d entries of z).
void x_coords(const GridDensity& g, std::size_t ix, std::span<double> z) {
  const auto d = static_cast<std::size_t>(g.d);
  const std::size_t nx = g.nx();
  for (std::size_t a = d; a-- > 0;) {
    z[a] = g.rho.coordinate(a, ix % nx);
    ix /= nx;
  }
}

void v_coords(const GridDensity& g, std::size_t iv, std::span<double> z) {
  const auto d = static_cast<std::size_t>(g.d);
  const std::size_t nv = g.nv();
  for (std::size_t a = d; a-- > 0;) {
    z[d + a] = g.rho.coordinate(d + a, iv % nv);
    iv /= nv;
  }
}

// Index along velocity axis k of v cell iv, and the stride of that axis.
std::size_t v_index(std::size_t iv, std::size_t k, int d, std::size_t nv) {
  return (iv / ipow(nv, d - 1 - static_cast<int>(k))) % nv;
}
std::size_t v_stride(std::size_t k, int d, std::size_t nv) { return ipow(nv, d - 1 - static_cast<int>(k)); }

// rho(x - v tau, v) by spectral interpolation in x.
void transport(SampledField& f, int d, double tau) {
  if (tau == 0.0) return;
  const auto dd = static_cast<std::size_t>(d);
  const auto& shape = f.shape();
  std::vector<std::size_t> x_axes;
  for (std::size_t a = 0; a < dd; ++a) x_axes.push_back(a);
  auto c = to_complex(f.values());
  fft_forward(c, shape, x_axes);
  const std::size_t n = f.size();
  std::vector<std::size_t> strides(2 * dd);
  for (std::size_t a = 0; a < 2 * dd; ++a) strides[a] = f.stride(a);
  for (std::size_t flat = 0; flat < n; ++flat) {
    double phase = 0.0;
    for (std::size_t a = 0; a < dd; ++a) {
      const double xi = angular_frequency((flat / strides[a]) % shape[a], shape[a], f.extent(a));
      const double v = f.coordinate(dd + a, (flat / strides[dd + a]) % shape[dd + a]);
      phase -= xi * v * tau;
    }
    c[flat] *= Complex(std::cos(phase), std::sin(phase));
  }
  fft_inverse(c, shape, x_axes);
  f.values() = real_part(c);
}

std::vector<double> mass_density(const GridDensity& g) {
  const std::size_t X = g.x_cells(), V = g.v_cells();
  double dv = 1.0;
  for (int a = 0; a < g.d; ++a) dv *= g.rho.spacing()[static_cast<std::size_t>(g.d + a)];
  std::vector<double> m(X, 0.0);
  for (std::size_t ix = 0; ix < X; ++ix) {
    double s = 0.0;
    for (std::size_t iv = 0; iv < V; ++iv) s += g.rho[ix * V + iv];
    m[ix] = s * dv;
  }
  return m;
}

void check_budget(double pairs, const SolverOptions& opt, const char* what) {
  if (pairs > opt.pair_budget) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s needs %.3g pair evaluations, above the budget of %.3g", what, pairs,
                  opt.pair_budget);
    throw BudgetExceeded(buf, pairs);
  }
}

// K * rho over the grid: periodic minimal image in x, zero padding in v.
void kernel_convolution(const GridDensity& g, const CoefficientSpec& spec, std::vector<SampledField>& out) {
  const auto d = static_cast<std::size_t>(g.d);
  const std::size_t nx = g.nx(), nv = g.nv();
  std::vector<std::size_t> pshape;
  for (std::size_t a = 0; a < d; ++a) pshape.push_back(nx);
  for (std::size_t a = 0; a < d; ++a) pshape.push_back(2 * nv);
  std::size_t P = 1;
  for (auto s : pshape) P *= s;
  const double dx = g.rho.spacing()[0], dvs = g.rho.spacing()[d];

  ComplexArray rp(P, Complex(0.0, 0.0));
  std::vector<ComplexArray> kern(d, ComplexArray(P));
  std::vector<std::size_t> idx(2 * d, 0);
  std::vector<double> w(2 * d), kv(d);
  for (std::size_t flat = 0; flat < P; ++flat) {
    bool inside = true, valid = true;
    std::size_t src = 0;
    for (std::size_t a = 0; a < 2 * d; ++a) {
      if (a < d) {
        w[a] = static_cast<double>(signed_bin(idx[a], nx)) * dx;
      } else {
        const auto k = static_cast<long>(idx[a]);
        const auto n = static_cast<long>(nv);
        if (k == n) valid = false;
        w[a] = static_cast<double>(k < n ? k : k - 2 * n) * dvs;
        if (idx[a] >= nv) inside = false;
      }
      src = src * (a < d ? nx : nv) + (a < d || idx[a] < nv ? idx[a] : 0);
    }
    if (inside) rp[flat] = g.rho[src];
    if (valid) {
      spec.drift_kernel(g.t, w, kv);
      for (std::size_t c = 0; c < d; ++c) kern[c][flat] = kv[c];
    } else {
      for (std::size_t c = 0; c < d; ++c) kern[c][flat] = 0.0;
    }
    for (std::size_t a = 2 * d; a-- > 0;) {
      if (++idx[a] < pshape[a]) break;
      idx[a] = 0;
    }
  }
  const auto axes = all_axes(pshape);
  fft_forward(rp, pshape, axes);
  const double vol = g.rho.cell_volume();
  const std::size_t X = g.x_cells(), V = g.v_cells();
  for (std::size_t c = 0; c < d; ++c) {
    fft_forward(kern[c], pshape, axes);
    for (std::size_t i = 0; i < P; ++i) kern[c][i] *= rp[i];
    fft_inverse(kern[c], pshape, axes);
    // Padded v index (j_1..j_d) with every j < nv maps back to the grid.
    for (std::size_t ix = 0; ix < X; ++ix) {
      for (std::size_t iv = 0; iv < V; ++iv) {
        std::size_t pv = 0, rem = iv;
        std::size_t mul = 1;
        for (std::size_t a = 0; a < d; ++a) {
          pv += (rem % nv) * mul;
          rem /= nv;
          mul *= 2 * nv;
        }
        out[c][ix * V + iv] += kern[c][ix * ipow(2 * nv, g.d) + pv].real() * vol;
      }
    }
  }
}

}  // namespace

std::size_t GridDensity::x_cells() const { return ipow(nx(), d); }
std::size_t GridDensity::v_cells() const { return ipow(nv(), d); }

GridDensity make_phase_grid(int d, std::size_t nx, std::size_t nv, double half_x, double half_v) {
  if (d < 1 || d > 2) throw ContractViolation("grid solver supports d in {1, 2}");
  if (nx < 2 || nv < 2) throw ContractViolation("phase grid needs at least 2 cells per axis");
  if (!(half_x > 0.0) || !(half_v > 0.0)) throw ContractViolation("phase box half-widths must be positive");
  const auto dd = static_cast<std::size_t>(d);
  std::vector<std::size_t> shape;
  std::vector<double> h, o;
  std::vector<AxisKind> kinds;
  for (std::size_t a = 0; a < dd; ++a) {
    shape.push_back(nx);
    h.push_back(2.0 * half_x / static_cast<double>(nx));
    o.push_back(-half_x);
    kinds.push_back(AxisKind::Position);
  }
  for (std::size_t a = 0; a < dd; ++a) {
    shape.push_back(nv);
    h.push_back(2.0 * half_v / static_cast<double>(nv));
    o.push_back(-half_v);
    kinds.push_back(AxisKind::Velocity);
  }
  GridDensity g;
  g.d = d;
  g.rho = SampledField(shape, h, o);
  g.rho.set_axes(kinds);
  return g;
}

void normalize_mass(GridDensity& g) {
  const double m = g.mass();
  if (!(m > 0.0) || !std::isfinite(m)) throw NumericalError("cannot normalize a density without positive mass");
  for (auto& v : g.rho.values()) v /= m;
}

double l1_distance(const SampledField& f, const SampledField& g) {
  if (!f.same_grid(g)) throw ContractViolation("l1_distance: fields on different grids");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(f[i] - g[i]);
  return s * f.cell_volume();
}

PhaseMoments moments(const GridDensity& g) {
  check_grid(g);
  const auto n = 2 * static_cast<std::size_t>(g.d);
  PhaseMoments m;
  m.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double vol = g.rho.cell_volume();
  const std::size_t X = g.x_cells(), V = g.v_cells();
  std::vector<double> z(n);
  for (std::size_t ix = 0; ix < X; ++ix) {
    x_coords(g, ix, z);
    for (std::size_t iv = 0; iv < V; ++iv) {
      v_coords(g, iv, z);
      const double w = g.rho[ix * V + iv] * vol;
      m.mass += w;
      for (std::size_t a = 0; a < n; ++a) {
        m.mean(static_cast<Eigen::Index>(a)) += w * z[a];
        for (std::size_t b = 0; b < n; ++b)
          second(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += w * z[a] * z[b];
      }
    }
  }
  if (!(m.mass > 0.0)) throw NumericalError("moments of a density without positive mass");
  m.mean /= m.mass;
  m.cov = second / m.mass - m.mean * m.mean.transpose();
  return m;
}

EffectiveFields effective_coefficients(const GridDensity& g, const CoefficientSpec& spec,
                                       const SolverOptions& opt) {
  check_grid(g);
  if (spec.d != g.d) throw ContractViolation("coefficient spec and grid disagree on d");
  const auto d = static_cast<std::size_t>(g.d);
  const std::size_t X = g.x_cells(), V = g.v_cells(), G = X * V;
  const double vol = g.rho.cell_volume();
  EffectiveFields e;
  e.mass_density = mass_density(g);
  const double M = g.mass();

  std::vector<double> pairs_cost{static_cast<double>(X) * static_cast<double>(G),
                                 static_cast<double>(G) * static_cast<double>(G)};
  if (spec.diffusion_general) check_budget(pairs_cost[0], opt, "general diffusion average");
  if (spec.drift_general) check_budget(pairs_cost[1], opt, "general drift average");

  e.abar.resize(X);
  std::vector<double> z(2 * d), zp(2 * d);
  for (std::size_t ix = 0; ix < X; ++ix) {
    x_coords(g, ix, z);
    const std::span<const double> x(z.data(), d);
    Matrix A;
    if (spec.diffusion_general) {
      A = Matrix::Zero(g.d, g.d);
      for (std::size_t jx = 0; jx < X; ++jx) {
        x_coords(g, jx, zp);
        for (std::size_t jv = 0; jv < V; ++jv) {
          const double w = g.rho[jx * V + jv];
          if (w == 0.0) continue;
          v_coords(g, jv, zp);
          A += spec.diffusion_general(g.t, x, e.mass_density[ix], zp) * (w * vol);
        }
      }
    } else if (spec.diffusion_local) {
      A = spec.diffusion_local(g.t, x, e.mass_density[ix]) * M;
    } else {
      A = *spec.diffusion_constant * M;
    }
    e.abar[ix] = ellipticity_project(A, spec.kappa0, spec.kappa1);
  }

  e.bbar.assign(d, SampledField(g.rho.shape(), g.rho.spacing(), g.rho.origin()));
  for (auto& b : e.bbar) b.set_axes(g.rho.axes());
  std::vector<double> out(d);
  if (spec.drift_local) {
    for (std::size_t ix = 0; ix < X; ++ix) {
      x_coords(g, ix, z);
      for (std::size_t iv = 0; iv < V; ++iv) {
        v_coords(g, iv, z);
        const std::size_t flat = ix * V + iv;
        spec.drift_local(g.t, z, g.rho[flat], out);
        for (std::size_t c = 0; c < d; ++c) e.bbar[c][flat] += out[c] * M;
      }
    }
  }
  if (spec.drift_kernel) kernel_convolution(g, spec, e.bbar);
  if (spec.drift_general) {
    for (std::size_t i = 0; i < G; ++i) {
      x_coords(g, i / V, z);
      v_coords(g, i % V, z);
      for (std::size_t j = 0; j < G; ++j) {
        const double w = g.rho[j];
        if (w == 0.0) continue;
        x_coords(g, j / V, zp);
        v_coords(g, j % V, zp);
        spec.drift_general(g.t, z, g.rho[i], zp, out);
        for (std::size_t c = 0; c < d; ++c) e.bbar[c][i] += out[c] * w * vol;
      }
    }
  }
  return e;
}

std::vector<SampledField> drift_direct_sum(const GridDensity& g, const CoefficientSpec& spec) {
  check_grid(g);
  const auto d = static_cast<std::size_t>(g.d);
  const std::size_t X = g.x_cells(), V = g.v_cells(), G = X * V;
  const double vol = g.rho.cell_volume();
  const double L = 2.0 * g.half_x();
  std::vector<SampledField> b(d, SampledField(g.rho.shape(), g.rho.spacing(), g.rho.origin()));
  std::vector<double> z(2 * d), zp(2 * d), out(d);
  for (std::size_t i = 0; i < G; ++i) {
    x_coords(g, i / V, z);
    v_coords(g, i % V, z);
    for (std::size_t j = 0; j < G; ++j) {
      x_coords(g, j / V, zp);
      v_coords(g, j % V, zp);
      // Image of z' with z - z' in (-L/2, L/2] along each x axis.
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = z[a] - zp[a];
        if (diff > 0.5 * L + 1e-12 * L) zp[a] += L;
        if (diff <= -0.5 * L + 1e-12 * L) zp[a] -= L;
      }
      spec.drift(g.t, z, g.rho[i], zp, out);
      for (std::size_t c = 0; c < d; ++c) b[c][i] += out[c] * g.rho[j] * vol;
    }
  }
  return b;
}

double cfl_limit(const GridDensity& g, const CoefficientSpec& spec, const SolverOptions& opt) {
  check_grid(g);
  const auto d = static_cast<std::size_t>(g.d);
  const double dx = g.rho.spacing()[0], dv = g.rho.spacing()[d];
  return opt.cfl_safety * std::min(dv * dv / (2.0 * g.d * spec.kappa1), dx / g.half_v());
}

namespace {

double drift_limit(const GridDensity& g, const CoefficientSpec& spec, const EffectiveFields& e,
                   const SolverOptions& opt) {
  const auto d = static_cast<std::size_t>(g.d);
  const double dv = g.rho.spacing()[d];
  double rate = 2.0 * g.d * spec.kappa1 / (dv * dv);
  for (const auto& b : e.bbar) {
    double m = 0.0;
    for (double v : b.values()) m = std::max(m, std::abs(v));
    rate += m / dv;
  }
  return opt.cfl_safety / rate;
}

void check_dt(double dt, double limit, const char* what) {
  if (!(dt > 0.0)) throw ContractViolation("time step must be positive");
  if (dt > limit * (1.0 + 1e-12)) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: dt = %.6g violates the stability bound, admissible dt <= %.6g", what, dt,
                  limit);
    throw CflError(buf, limit);
  }
}

// Gradient of u along velocity axis l at v cell iv, one-sided at the walls.
double central_diff(const double* u, std::size_t iv, std::size_t l, int d, std::size_t nv, double dv) {
  const std::size_t s = v_stride(l, d, nv), k = v_index(iv, l, d, nv);
  const std::size_t lo = k > 0 ? iv - s : iv, hi = k + 1 < nv ? iv + s : iv;
  const double span = static_cast<double>((k + 1 < nv ? 1 : 0) + (k > 0 ? 1 : 0)) * dv;
  return (u[hi] - u[lo]) / span;
}

// Diffusive flux A grad u across the face between iv and iv + e_k.
double diffusive_flux(const double* u, const Matrix& A, std::size_t iv, std::size_t k, int d, std::size_t nv,
                      double dv) {
  const std::size_t s = v_stride(k, d, nv);
  const auto ki = static_cast<Eigen::Index>(k);
  double flux = A(ki, ki) * (u[iv + s] - u[iv]) / dv;
  for (std::size_t l = 0; l < static_cast<std::size_t>(d); ++l) {
    if (l == k) continue;
    const double gl = 0.5 * (central_diff(u, iv, l, d, nv, dv) + central_diff(u, iv + s, l, d, nv, dv));
    flux += A(ki, static_cast<Eigen::Index>(l)) * gl;
  }
  return flux;
}

// Forward collision: u += dt div_v(A grad u - b u), zero flux at the walls.
void forward_collision(GridDensity& g, const EffectiveFields& e, double dt) {
  const int d = g.d;
  const std::size_t nv = g.nv(), X = g.x_cells(), V = g.v_cells();
  const double dv = g.rho.spacing()[static_cast<std::size_t>(d)];
  auto& vals = g.rho.values();
  const auto Xl = static_cast<long>(X);
#pragma omp parallel
  {
    std::vector<double> flux(V), next(V);
#pragma omp for schedule(static)
    for (long ixl = 0; ixl < Xl; ++ixl) {
      const auto ix = static_cast<std::size_t>(ixl);
      const double* u = vals.data() + ix * V;
      const Matrix& A = e.abar[ix];
      std::copy(u, u + V, next.begin());
      for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k) {
        const std::size_t s = v_stride(k, d, nv);
        const double* b = e.bbar[k].values().data() + ix * V;
        for (std::size_t iv = 0; iv < V; ++iv) {
          if (v_index(iv, k, d, nv) + 1 >= nv) {
            flux[iv] = 0.0;
            continue;
          }
          const double bf = 0.5 * (b[iv] + b[iv + s]);
          const double adv = bf > 0.0 ? bf * u[iv] : bf * u[iv + s];
          flux[iv] = adv - diffusive_flux(u, A, iv, k, d, nv, dv);
        }
        for (std::size_t iv = 0; iv < V; ++iv) {
          const double left = v_index(iv, k, d, nv) > 0 ? flux[iv - s] : 0.0;
          next[iv] -= dt / dv * (flux[iv] - left);
        }
      }
      std::copy(next.begin(), next.end(), vals.begin() + static_cast<long>(ix * V));
    }
  }
}

// Backward collision: u += dt (div_v(A grad u) + b . grad_v u - f).
void backward_collision(SampledField& w, int d, const EffectiveFields& e, const std::vector<double>& f, double dt) {
  const std::size_t nv = w.shape()[static_cast<std::size_t>(d)];
  const std::size_t V = ipow(nv, d), X = w.size() / V;
  const double dv = w.spacing()[static_cast<std::size_t>(d)];
  auto& vals = w.values();
  const auto Xl = static_cast<long>(X);
#pragma omp parallel
  {
    std::vector<double> flux(V), next(V);
#pragma omp for schedule(static)
    for (long ixl = 0; ixl < Xl; ++ixl) {
      const auto ix = static_cast<std::size_t>(ixl);
      const double* u = vals.data() + ix * V;
      const Matrix& A = e.abar[ix];
      for (std::size_t iv = 0; iv < V; ++iv) next[iv] = u[iv] - dt * f[ix * V + iv];
      for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k) {
        const std::size_t s = v_stride(k, d, nv);
        const double* b = e.bbar[k].values().data() + ix * V;
        for (std::size_t iv = 0; iv < V; ++iv)
          flux[iv] = v_index(iv, k, d, nv) + 1 < nv ? diffusive_flux(u, A, iv, k, d, nv, dv) : 0.0;
        for (std::size_t iv = 0; iv < V; ++iv) {
          const std::size_t kk = v_index(iv, k, d, nv);
          const double left = kk > 0 ? flux[iv - s] : 0.0;
          double grad = 0.0;
          if (b[iv] > 0.0 && kk + 1 < nv) grad = (u[iv + s] - u[iv]) / dv;
          if (b[iv] < 0.0 && kk > 0) grad = (u[iv] - u[iv - s]) / dv;
          next[iv] += dt * ((flux[iv] - left) / dv + b[iv] * grad);
        }
      }
      std::copy(next.begin(), next.end(), vals.begin() + static_cast<long>(ix * V));
    }
  }
}

double boundary_mass(const GridDensity& g) {
  const std::size_t nv = g.nv(), X = g.x_cells(), V = g.v_cells();
  double s = 0.0;
  for (std::size_t ix = 0; ix < X; ++ix) {
    for (std::size_t iv = 0; iv < V; ++iv) {
      bool edge = false;
      for (std::size_t k = 0; k < static_cast<std::size_t>(g.d); ++k) {
        const std::size_t j = v_index(iv, k, g.d, nv);
        edge = edge || j == 0 || j + 1 == nv;
      }
      if (edge) s += g.rho[ix * V + iv];
    }
  }
  return s * g.rho.cell_volume();
}

}  // namespace

GridDensity fpk_step(const GridDensity& g, const CoefficientSpec& spec, double dt, StepLog* log,
                     const SolverOptions& opt) {
  check_grid(g);
  if (spec.d != g.d) throw ContractViolation("coefficient spec and grid disagree on d");
  check_dt(dt, cfl_limit(g, spec, opt), "fpk_step");
  const double mass_in = g.mass();

  GridDensity out = g;
  transport(out.rho, g.d, 0.5 * dt);
  out.t = g.t + 0.5 * dt;
  const auto e = effective_coefficients(out, spec, opt);
  check_dt(dt, drift_limit(out, spec, e, opt), "fpk_step (drift positivity)");
  forward_collision(out, e, dt);
  transport(out.rho, g.d, 0.5 * dt);
  out.t = g.t + dt;

  const double mass_pre = out.mass();
  double neg = 0.0;
  for (auto& v : out.rho.values()) {
    if (!std::isfinite(v)) throw NumericalError("fpk_step produced a non-finite density");
    if (v < 0.0) {
      neg -= v;
      v = 0.0;
    }
  }
  const double vol = out.rho.cell_volume();
  const double mass_post = out.mass();
  if (mass_post > 0.0)
    for (auto& v : out.rho.values()) v *= mass_in / mass_post;
  if (log) {
    log->clip_mass = neg * vol;
    log->mass_error = std::abs(mass_pre - mass_in);
    log->boundary_mass = boundary_mass(out);
  }
  return out;
}

FpkTrajectory fpk_solve(const GridDensity& g0, const CoefficientSpec& spec, double T, double dt,
                        const std::vector<double>& output_times, const SolverOptions& opt) {
  check_grid(g0);
  if (!(T >= g0.t)) throw ContractViolation("fpk_solve: final time before the initial time");
  check_dt(dt, cfl_limit(g0, spec, opt), "fpk_solve");
  std::vector<double> targets;
  for (double t : output_times) {
    if (t < g0.t || t > T) throw ContractViolation("fpk_solve: output time outside [t0, T]");
    if (t > g0.t) targets.push_back(t);
  }
  targets.push_back(T);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  FpkTrajectory traj;
  traj.log.dt = dt;
  traj.snapshots.push_back(g0);
  const double m0 = g0.mass();
  GridDensity g = g0;
  const double tol = 1e-12 * std::max(1.0, std::abs(T));
  for (double target : targets) {
    while (g.t < target - tol) {
      const double h = std::min(dt, target - g.t);
      StepLog s;
      g = fpk_step(g, spec, h, &s, opt);
      if (target - g.t <= tol) g.t = target;
      ++traj.log.steps;
      traj.log.clip_mass += s.clip_mass;
      traj.log.max_step_mass_error = std::max(traj.log.max_step_mass_error, s.mass_error);
      traj.log.boundary_leakage = std::max(traj.log.boundary_leakage, s.boundary_mass);
    }
    traj.snapshots.push_back(g);
  }
  traj.log.cumulative_mass_error = std::abs(g.mass() - m0);
  return traj;
}

nlohmann::json run_metadata(const CoefficientSpec& spec, const GridDensity& g, const RunLog& log) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(spec.hash()));
  return {{"spec_hash", hash},
          {"spec", spec.name},
          {"grid", {{"d", g.d}, {"nx", g.nx()}, {"nv", g.nv()}, {"half_x", g.half_x()}, {"half_v", g.half_v()}}},
          {"dt", log.dt},
          {"steps", log.steps},
          {"clip_mass", log.clip_mass},
          {"boundary_leakage", log.boundary_leakage},
          {"max_step_mass_error", log.max_step_mass_error},
          {"cumulative_mass_error", log.cumulative_mass_error}};
}

double BackwardSolution::value(double t, std::span<const double> z) const {
  if (times.empty()) throw ContractViolation("empty backward solution");
  const auto n = 2 * static_cast<std::size_t>(d);
  if (z.size() != n) throw ContractViolation("BackwardSolution::value: point dimension mismatch");
  std::size_t k = 0;
  double lam = 0.0;
  if (t <= times.front()) {
    k = 0;
  } else if (t >= times.back()) {
    k = times.size() - 1;
  } else {
    k = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin()) - 1;
    lam = (t - times[k]) / (times[k + 1] - times[k]);
  }
  const auto interp = [&](const SampledField& f) {
    std::vector<std::size_t> lo(n), hi(n);
    std::vector<double> fr(n);
    for (std::size_t a = 0; a < n; ++a) {
      const auto m = f.shape()[a];
      double q = (z[a] - f.origin()[a]) / f.spacing()[a] - 0.5;
      if (a < static_cast<std::size_t>(d)) {
        const double base = std::floor(q);
        fr[a] = q - base;
        const long i0 = static_cast<long>(base);
        const long mm = static_cast<long>(m);
        lo[a] = static_cast<std::size_t>(((i0 % mm) + mm) % mm);
        hi[a] = (lo[a] + 1) % m;
      } else {
        q = std::clamp(q, 0.0, static_cast<double>(m - 1));
        lo[a] = std::min(static_cast<std::size_t>(q), m - 2);
        hi[a] = lo[a] + 1;
        fr[a] = q - static_cast<double>(lo[a]);
      }
    }
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (std::size_t a = 0; a < n; ++a) {
        const bool up = (corner >> a) & 1U;
        w *= up ? fr[a] : 1.0 - fr[a];
        flat += (up ? hi[a] : lo[a]) * f.stride(a);
      }
      if (w != 0.0) acc += w * f[flat];
    }
    return acc;
  };
  const double a = interp(u[k]);
  return lam == 0.0 ? a : (1.0 - lam) * a + lam * interp(u[k + 1]);
}

BackwardSolution backward_kolmogorov_solve(const std::vector<GridDensity>& path, const CoefficientSpec& spec,
                                           const SpaceTimeSource& f, double T, double dt,
                                           const std::optional<TerminalValue>& terminal,
                                           const SolverOptions& opt) {
  if (path.empty()) throw ContractViolation("backward solve needs a density path");
  const GridDensity& g0 = path.front();
  check_grid(g0);
  if (spec.d != g0.d) throw ContractViolation("coefficient spec and grid disagree on d");
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!path[i].rho.same_grid(g0.rho)) throw ContractViolation("density path changes grid");
    if (path[i].t < path[i - 1].t) throw ContractViolation("density path must be time ordered");
  }
  const double t_lo = g0.t;
  if (!(T > t_lo)) throw ContractViolation("backward solve needs T after the path start");
  check_dt(dt, cfl_limit(g0, spec, opt), "backward_kolmogorov_solve");

  std::map<std::size_t, EffectiveFields> cache;
  const auto fields_at = [&](double t) -> const EffectiveFields& {
    std::size_t k = 0;
    for (std::size_t i = 0; i < path.size(); ++i)
      if (path[i].t <= t + 1e-12) k = i;
    auto it = cache.find(k);
    if (it == cache.end()) {
      auto e = effective_coefficients(path[k], spec, opt);
      check_dt(dt, drift_limit(path[k], spec, e, opt), "backward_kolmogorov_solve (drift positivity)");
      it = cache.emplace(k, std::move(e)).first;
    }
    return it->second;
  };

  SampledField w(g0.rho.shape(), g0.rho.spacing(), g0.rho.origin());
  w.set_axes(g0.rho.axes());
  if (terminal) w.fill(*terminal);
  std::vector<double> fv(w.size());

  BackwardSolution sol;
  sol.d = g0.d;
  std::vector<double> times{T};
  std::vector<SampledField> us{w};
  double t = T;
  const double tol = 1e-12 * std::max(1.0, std::abs(T));
  while (t > t_lo + tol) {
    const double h = std::min(dt, t - t_lo);
    const double tm = t - 0.5 * h;
    transport(w, g0.d, -0.5 * h);
    const auto& e = fields_at(tm);
    SampledField probe = w;
    probe.fill([&](std::span<const double> z) { return f(tm, z); });
    fv = probe.values();
    backward_collision(w, g0.d, e, fv, h);
    transport(w, g0.d, -0.5 * h);
    for (double v : w.values())
      if (!std::isfinite(v)) throw NumericalError("backward solve produced a non-finite value");
    t -= h;
    if (t - t_lo <= tol) t = t_lo;
    times.push_back(t);
    us.push_back(w);
  }
  std::reverse(times.begin(), times.end());
  std::reverse(us.begin(), us.end());
  sol.times = std::move(times);
  sol.u = std::move(us);
  return sol;
}

}  // namespace kmv

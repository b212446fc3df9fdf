#include "kmv/degiorgi_diag.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kmv/errors.hpp"

namespace kmv {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

void check_iteration_params(double C0, double lambda, double delta) {
  if (!(C0 > 1.0) || !(lambda > 1.0) || !(delta > 0.0))
    throw PreconditionError("iteration needs C0 > 1, lambda > 1, delta > 0 (got C0 = " + fmt(C0) +
                            ", lambda = " + fmt(lambda) + ", delta = " + fmt(delta) + ")");
}

std::vector<double> default_taus() {
  std::vector<double> t;
  for (int k = 0; k <= 8; ++k) t.push_back(1.0 + 0.125 * k);
  return t;
}

std::size_t time_axes_check(const SampledField& u) {
  const auto& ax = u.axes();
  if (ax.empty() || ax[0] != AxisKind::Time || (u.ndim() - 1) % 2 != 0 || u.ndim() < 3)
    throw ContractViolation("De Giorgi probes need a field with axes (t, x.., v..)");
  const std::size_t d = (u.ndim() - 1) / 2;
  for (std::size_t i = 0; i < d; ++i)
    if (ax[1 + i] != AxisKind::Position || ax[1 + d + i] != AxisKind::Velocity)
      throw ContractViolation("De Giorgi probes need a field with axes (t, x.., v..)");
  return d;
}

// Cells whose midpoints lie in the cylinder.
std::vector<char> cylinder_mask(const SampledField& u, const KineticCylinder& Q) {
  const std::size_t d = (u.ndim() - 1) / 2;
  std::vector<char> mask(u.size(), 0);
  std::vector<std::size_t> idx(u.ndim(), 0);
  std::vector<double> x(d), v(d);
  for (std::size_t flat = 0; flat < u.size(); ++flat) {
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = u.coordinate(1 + i, idx[1 + i]);
      v[i] = u.coordinate(1 + d + i, idx[1 + d + i]);
    }
    mask[flat] = Q.contains(u.coordinate(0, idx[0]), x, v) ? 1 : 0;
    for (std::size_t a = u.ndim(); a-- > 0;) {
      if (++idx[a] < u.shape()[a]) break;
      idx[a] = 0;
    }
  }
  return mask;
}

void check_cover(const SampledField& u, const CylinderFamily& Q) {
  const std::size_t d = time_axes_check(u);
  if (Q.x0.size() != d || Q.v0.size() != d) throw ContractViolation("cylinder family dimension mismatch");
  if (!(Q.scale > 0.0)) throw ContractViolation("cylinder family scale must be positive");
  const auto Q2 = Q.at(2.0);
  auto covers = [&](std::size_t axis, double c, double half) {
    const double lo = u.origin()[axis], hi = lo + u.extent(axis);
    return c - half >= lo - 1e-12 && c + half <= hi + 1e-12;
  };
  bool ok = covers(0, Q.t0, Q2.half_width(AxisKind::Time));
  for (std::size_t i = 0; i < d; ++i) {
    ok = ok && covers(1 + i, Q.x0[i], Q2.half_width(AxisKind::Position));
    ok = ok && covers(1 + d + i, Q.v0[i], Q2.half_width(AxisKind::Velocity));
  }
  if (!ok) throw ContractViolation("sampled region does not contain Q_2");
}

SampledField masked(const SampledField& u, const std::vector<char>& mask, double kappa, bool indicator) {
  SampledField f(u.shape(), u.spacing(), u.origin());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!mask[i] || !(u[i] > kappa)) continue;
    f[i] = indicator ? 1.0 : u[i] - kappa;
  }
  return f;
}

}  // namespace

IterationSequence::IterationSequence(std::vector<double> a, double C0, double lambda, double delta)
    : a_(std::move(a)), C0_(C0), lambda_(lambda), delta_(delta) {
  check_iteration_params(C0, lambda, delta);
  for (std::size_t n = 0; n < a_.size(); ++n)
    if (!(a_[n] >= 0.0)) throw PreconditionError("a_" + std::to_string(n + 1) + " is negative or NaN");
  for (std::size_t n = 0; n + 1 < a_.size(); ++n) {
    // Terms are 1-based: a_{n+1} <= C0 lambda^n a_n^{1+delta}.
    const double k = static_cast<double>(n + 1);
    const double bound = C0 * std::pow(lambda, k) * std::pow(a_[n], 1.0 + delta);
    if (a_[n + 1] > bound * (1.0 + 1e-12))
      throw PreconditionError("a_" + std::to_string(n + 2) + " = " + fmt(a_[n + 1]) + " exceeds C0 lambda^n a_n^(1+delta) = " +
                              fmt(bound));
  }
}

double iteration_threshold(double C0, double lambda, double delta) {
  check_iteration_params(C0, lambda, delta);
  return std::pow(C0 * std::pow(lambda, (1.0 + delta) / delta), -1.0 / delta);
}

std::string to_string(IterationVerdict v) {
  switch (v) {
    case IterationVerdict::ToZero: return "to-zero";
    case IterationVerdict::Diverges: return "diverges";
    case IterationVerdict::Undecided: return "undecided";
  }
  return "undecided";
}

IterationResult iterate_to_zero(double a1, double C0, double lambda, double delta, std::size_t n_max) {
  check_iteration_params(C0, lambda, delta);
  if (!(a1 >= 0.0) || !std::isfinite(a1)) throw ContractViolation("a_1 must be finite and nonnegative");
  if (n_max < 2) throw ContractViolation("n_max must be at least 2");
  IterationResult r;
  r.threshold = iteration_threshold(C0, lambda, delta);
  r.below_threshold = a1 <= r.threshold;
  r.sequence.push_back(a1);
  for (std::size_t n = 1; n < n_max; ++n) {
    const double next = C0 * std::pow(lambda, static_cast<double>(n)) * std::pow(r.sequence.back(), 1.0 + delta);
    if (!std::isfinite(next)) {
      r.verdict = IterationVerdict::Diverges;
      return r;
    }
    r.sequence.push_back(next);
  }
  const auto tail = r.sequence.begin() + static_cast<std::ptrdiff_t>(n_max / 2);
  r.verdict = *std::max_element(tail, r.sequence.end()) < 1e-8 ? IterationVerdict::ToZero : IterationVerdict::Undecided;
  return r;
}

double absorb_lemma_check(const SampledProfile& h, double theta, double alpha, double A, double B) {
  if (h.tau.size() != h.h.size() || h.tau.size() < 2) throw ContractViolation("profile needs matching tau and h, size >= 2");
  if (!(theta > 0.0 && theta < 1.0)) throw ContractViolation("theta must lie in (0, 1)");
  if (!(alpha >= 0.0) || !(A >= 0.0) || !(B >= 0.0)) throw ContractViolation("alpha, A, B must be nonnegative");
  for (std::size_t i = 0; i < h.tau.size(); ++i) {
    if (!(h.h[i] >= 0.0) || !std::isfinite(h.h[i])) throw ContractViolation("h must be finite and nonnegative");
    if (i > 0 && !(h.tau[i] > h.tau[i - 1])) throw ContractViolation("tau must be strictly increasing");
  }
  for (std::size_t i = 0; i < h.tau.size(); ++i)
    for (std::size_t k = i + 1; k < h.tau.size(); ++k) {
      const double rhs = theta * h.h[k] + std::pow(h.tau[k] - h.tau[i], -alpha) * A + B;
      if (h.h[i] > rhs * (1.0 + 1e-12) + 1e-300)
        throw PreconditionError("h(tau) <= theta h(tau') + (tau' - tau)^-alpha A + B fails at tau = " + fmt(h.tau[i]) +
                                ", tau' = " + fmt(h.tau[k]) + ": " + fmt(h.h[i]) + " > " + fmt(rhs));
    }
  const double denom = std::pow(h.tau.back() - h.tau.front(), -alpha) * A + B;
  if (h.h.front() == 0.0) return 0.0;
  if (denom == 0.0) throw PreconditionError("A = B = 0 with h(tau_1) > 0");
  return h.h.front() / denom;
}

double absorption_constant(double alpha, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw ContractViolation("theta must lie in (0, 1)");
  if (!(alpha >= 0.0)) throw ContractViolation("alpha must be nonnegative");
  const double base = 1.0 / (1.0 - theta);
  if (alpha == 0.0) return base;
  const double mua = 0.5 * (1.0 + theta);
  const double mu = std::pow(mua, 1.0 / alpha);
  return std::max(std::pow(1.0 - mu, -alpha) / (1.0 - theta / mua), base);
}

KineticCylinder CylinderFamily::at(double tau) const {
  KineticCylinder c;
  c.t0 = t0;
  c.x0 = x0;
  c.v0 = v0;
  c.radius = scale * tau;
  return c;
}

void IndexFamily::validate(std::size_t ndim) const {
  if (indices.size() < 2) throw ContractViolation("index family needs m >= 2 indices");
  if (split < 1 || split >= indices.size()) throw ContractViolation("index family needs 1 <= j < m");
  for (const auto& p : indices) {
    if (p.size() != ndim) throw ContractViolation("index " + p.to_string() + " has the wrong length");
    for (double x : p.values())
      if (!(x > 1.0) || std::isinf(x)) throw ContractViolation("index " + p.to_string() + " is not in (1, inf)^N");
  }
}

TruncationEnergy TruncationEnergy::compute(const SampledField& u, const CylinderFamily& Q, double kappa, double tau,
                                           double sigma, std::size_t levels, const std::vector<MultiIndex>& norms) {
  check_cover(u, Q);
  if (!(1.0 <= tau && tau < sigma && sigma <= 2.0)) throw ContractViolation("need 1 <= tau < sigma <= 2");
  if (!(kappa >= 0.0)) throw ContractViolation("kappa must be nonnegative");
  if (levels < 1) throw ContractViolation("need at least one level");
  TruncationEnergy e;
  e.energies.assign(norms.size(), {});
  for (std::size_t n = 1; n <= levels; ++n) {
    const double w = std::ldexp(1.0, 1 - static_cast<int>(n));
    e.kappas.push_back(kappa * (1.0 - w));
    e.radii.push_back(tau + (sigma - tau) * w);
    const auto f = masked(u, cylinder_mask(u, Q.at(e.radii.back())), e.kappas.back(), false);
    for (std::size_t k = 0; k < norms.size(); ++k) e.energies[k].push_back(mixed_lp_norm(f, norms[k]));
  }
  return e;
}

bool DeGiorgiCertificate::finite() const {
  return std::all_of(constants.begin(), constants.end(), [](double c) { return std::isfinite(c); });
}

nlohmann::json DeGiorgiCertificate::to_json() const {
  auto idx = [](const std::vector<MultiIndex>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back(std::vector<double>(p.values().begin(), p.values().end()));
    return a;
  };
  nlohmann::json c = nlohmann::json::array();
  for (double x : constants) c.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json("inf"));
  return {{"indices", idx(family.indices)},
          {"split", family.split},
          {"lambda", lambda},
          {"A", A},
          {"targets", idx(targets)},
          {"constants", c},
          {"lattice", {{"tau", taus}, {"kappa", kappas}, {"probes", probes}}},
          {"scope", "inequality checked on the probed lattice only"}};
}

std::vector<double> kappa_ladder(const SampledField& u, const CylinderFamily& Q, std::size_t levels) {
  check_cover(u, Q);
  if (levels < 1) throw ContractViolation("need at least one kappa level");
  const auto mask = cylinder_mask(u, Q.at(2.0));
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (mask[i]) {
      lo = std::min(lo, u[i]);
      hi = std::max(hi, u[i]);
    }
  if (!std::isfinite(lo)) throw ContractViolation("Q_2 contains no grid cell");
  lo = std::max(lo, 0.0);
  hi = std::max(hi, lo);
  std::vector<double> k;
  for (std::size_t i = 0; i < levels; ++i) k.push_back(lo + (hi - lo) * (1.0 - std::ldexp(1.0, -static_cast<int>(i))));
  return k;
}

DeGiorgiCertificate fit_certificate(const SampledField& u, const CylinderFamily& Q, const CertificateOptions& opt) {
  check_cover(u, Q);
  opt.family.validate(u.ndim());
  if (!(opt.lambda >= 0.0) || !(opt.A >= 0.0)) throw ContractViolation("lambda and A must be nonnegative");
  DeGiorgiCertificate cert;
  cert.family = opt.family;
  cert.lambda = opt.lambda;
  cert.A = opt.A;
  cert.targets = opt.targets.empty() ? opt.family.indices : opt.targets;
  for (const auto& p : cert.targets)
    if (p.size() != u.ndim()) throw ContractViolation("target " + p.to_string() + " has the wrong length");
  cert.taus = opt.taus.empty() ? default_taus() : opt.taus;
  std::sort(cert.taus.begin(), cert.taus.end());
  if (cert.taus.size() < 2 || cert.taus.front() < 1.0 || cert.taus.back() > 2.0)
    throw ContractViolation("tau lattice needs at least two points in [1, 2]");
  cert.kappas = opt.kappas.empty() ? kappa_ladder(u, Q, opt.kappa_levels) : opt.kappas;
  for (double k : cert.kappas)
    if (!(k >= 0.0)) throw ContractViolation("kappa lattice must be nonnegative");

  const std::size_t R = cert.taus.size(), K = cert.kappas.size(), m = cert.family.indices.size(),
                    T = cert.targets.size();
  std::vector<std::vector<char>> masks(R);
  for (std::size_t r = 0; r < R; ++r) {
    masks[r] = cylinder_mask(u, Q.at(cert.taus[r]));
    if (r > 0 && masks[r] == masks[r - 1])
      throw ContractViolation("cylinders Q_" + fmt(cert.taus[r - 1]) + " and Q_" + fmt(cert.taus[r]) +
                              " select the same cells; refine the grid");
  }
  // Norm tables per (radius, kappa): targets on truncations, family on truncations
  // and on level sets.
  std::vector<double> tgt(R * K * T), trunc(R * K * m), level(R * K * m);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t rk = 0; rk < static_cast<std::ptrdiff_t>(R * K); ++rk) {
    const std::size_t r = static_cast<std::size_t>(rk) / K, k = static_cast<std::size_t>(rk) % K;
    const auto f = masked(u, masks[r], cert.kappas[k], false);
    const auto g = masked(u, masks[r], cert.kappas[k], true);
    for (std::size_t i = 0; i < T; ++i) tgt[static_cast<std::size_t>(rk) * T + i] = mixed_lp_norm(f, cert.targets[i]);
    for (std::size_t i = 0; i < m; ++i) {
      trunc[static_cast<std::size_t>(rk) * m + i] = mixed_lp_norm(f, cert.family.indices[i]);
      level[static_cast<std::size_t>(rk) * m + i] = mixed_lp_norm(g, cert.family.indices[i]);
    }
  }
  cert.constants.assign(T, 0.0);
  for (std::size_t a = 0; a < R; ++a)
    for (std::size_t b = a + 1; b < R; ++b)
      for (std::size_t k = 0; k < K; ++k) {
        ++cert.probes;
        const std::size_t sk = b * K + k;
        double rhs = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          rhs += i < cert.family.split ? trunc[sk * m + i] : cert.A * level[sk * m + i];
        const double w = std::pow(cert.taus[b] - cert.taus[a], cert.lambda);
        for (std::size_t i = 0; i < T; ++i) {
          const double lhs = w * tgt[(a * K + k) * T + i];
          if (lhs == 0.0) continue;
          const double c = rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
          cert.constants[i] = std::max(cert.constants[i], c);
        }
      }
  return cert;
}

LocalBound local_bound_check(const SampledField& u, const DeGiorgiCertificate& cert, const CylinderFamily& Q, double p,
                             double tau, double sigma, std::optional<double> gamma) {
  check_cover(u, Q);
  if (!cert.finite()) throw PreconditionError("certificate has an infinite constant");
  if (!(p > 0.0)) throw ContractViolation("p must be positive");
  if (!(1.0 <= tau && tau < sigma && sigma <= 2.0)) throw ContractViolation("need 1 <= tau < sigma <= 2");
  const double g = gamma.value_or(cert.lambda);
  LocalBound r;
  const auto inner = cylinder_mask(u, Q.at(tau));
  for (std::size_t i = 0; i < u.size(); ++i)
    if (inner[i]) r.lhs = std::max(r.lhs, u[i]);
  r.norm = mixed_lp_norm(masked(u, cylinder_mask(u, Q.at(sigma)), 0.0, false), MultiIndex::uniform(u.ndim(), p));
  r.rhs = std::pow(sigma - tau, -g) * r.norm + cert.A;
  if (r.rhs > 0.0) {
    r.ratio = r.lhs / r.rhs;
  } else if (r.lhs > 0.0) {
    r.inconsistent = true;
    r.ratio = std::numeric_limits<double>::infinity();
  } else {
    r.degenerate = true;
  }
  return r;
}

SampledField stack_snapshots(const std::vector<GridDensity>& snaps) {
  if (snaps.size() < 2) throw ContractViolation("need at least two snapshots");
  const double h = snaps[1].t - snaps[0].t;
  if (!(h > 0.0)) throw ContractViolation("snapshot times must increase");
  for (std::size_t k = 1; k < snaps.size(); ++k) {
    if (std::abs(snaps[k].t - snaps[k - 1].t - h) > 1e-9 * std::max(1.0, std::abs(h)))
      throw ContractViolation("snapshot times must be uniformly spaced");
    if (!snaps[k].rho.same_grid(snaps[0].rho)) throw ContractViolation("snapshots live on different grids");
  }
  const auto& f = snaps[0].rho;
  std::vector<std::size_t> shape{snaps.size()};
  std::vector<double> spacing{h}, origin{snaps[0].t - 0.5 * h};
  shape.insert(shape.end(), f.shape().begin(), f.shape().end());
  spacing.insert(spacing.end(), f.spacing().begin(), f.spacing().end());
  origin.insert(origin.end(), f.origin().begin(), f.origin().end());
  std::vector<double> values;
  values.reserve(snaps.size() * f.size());
  for (const auto& s : snaps) values.insert(values.end(), s.rho.values().begin(), s.rho.values().end());
  SampledField out(shape, spacing, origin, std::move(values));
  std::vector<AxisKind> axes{AxisKind::Time};
  axes.insert(axes.end(), f.axes().begin(), f.axes().end());
  out.set_axes(axes);
  return out;
}

}  // namespace kmv

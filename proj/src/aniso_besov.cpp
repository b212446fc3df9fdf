#include "kmv/aniso_besov.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmv/errors.hpp"
#include "kmv/fft.hpp"

namespace kmv {

DyadicPartition::DyadicPartition(AnisotropyVector a, int j_max) : a_(std::move(a)), j_max_(j_max) {
  if (j_max < 0) throw ContractViolation("j_max must be nonnegative");
}

double DyadicPartition::psi(double s) {
  if (s <= 1.0) return 1.0;
  if (s >= 2.0) return 0.0;
  const double u = s - 1.0;
  return 1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double DyadicPartition::phi(int j, double s) {
  if (j == 0) return psi(s);
  return psi(std::ldexp(s, -j)) - psi(std::ldexp(s, 1 - j));
}

double DyadicPartition::phi_enlarged(int j, double s) {
  const double outer = psi(std::ldexp(s, -(j + 1)));
  return j <= 1 ? outer : outer - psi(std::ldexp(s, 2 - j));
}

std::vector<double> symbol_norms(const SampledField& f, const AnisotropyVector& a) {
  const std::size_t nd = f.ndim();
  if (a.size() != nd) throw ContractViolation("anisotropy length must match field rank");
  // Per-axis contributions |xi_i|^{1/a_i}, summed over the multi-index.
  std::vector<std::vector<double>> part(nd);
  for (std::size_t ax = 0; ax < nd; ++ax) {
    const std::size_t n = f.shape()[ax];
    part[ax].resize(n);
    for (std::size_t k = 0; k < n; ++k)
      part[ax][k] = std::pow(std::abs(angular_frequency(k, n, f.extent(ax))), 1.0 / a[ax]);
  }
  std::vector<double> s(f.size(), 0.0);
  std::vector<std::size_t> idx(nd, 0);
  for (std::size_t flat = 0; flat < s.size(); ++flat) {
    double acc = 0.0;
    for (std::size_t ax = 0; ax < nd; ++ax) acc += part[ax][idx[ax]];
    s[flat] = acc;
    for (std::size_t ax = nd; ax-- > 0;) {
      if (++idx[ax] < f.shape()[ax]) break;
      idx[ax] = 0;
    }
  }
  return s;
}

DyadicPartition DyadicPartition::for_grid(const SampledField& f, const AnisotropyVector& a,
                                          JmaxRule rule) {
  if (rule == JmaxRule::Complete) {
    const auto s = symbol_norms(f, a);
    const double smax = *std::max_element(s.begin(), s.end());
    int j = 0;
    while (std::ldexp(1.0, j) < smax) ++j;
    return DyadicPartition(a, j);
  }
  // Every xi with |xi|_a <= 2^{J+1} must be representable on each axis.
  double reach = kInf;
  for (std::size_t ax = 0; ax < f.ndim(); ++ax) {
    const double nyq = std::abs(angular_frequency(f.shape()[ax] / 2, f.shape()[ax], f.extent(ax)));
    reach = std::min(reach, std::pow(nyq, 1.0 / a[ax]));
  }
  const int j = static_cast<int>(std::floor(std::log2(reach))) - 1;
  return DyadicPartition(a, std::max(j, 0));
}

namespace {

ComplexArray spectrum_of(const SampledField& f) {
  for (double v : f.values())
    if (!std::isfinite(v)) throw ContractViolation("field has non-finite values");
  auto c = to_complex(f.values());
  fft_forward(c, f.shape(), all_axes(f.shape()));
  return c;
}

SampledField synthesize(const SampledField& like, ComplexArray c) {
  fft_inverse(c, like.shape(), all_axes(like.shape()));
  SampledField out(like.shape(), like.spacing(), like.origin(), real_part(c));
  out.set_axes(like.axes());
  return out;
}

template <class Mask>
SampledField masked(const SampledField& f, const ComplexArray& fhat, const std::vector<double>& s,
                    Mask&& mask) {
  ComplexArray c(fhat.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = fhat[i] * mask(s[i]);
  return synthesize(f, std::move(c));
}

void check_j(int j, const DyadicPartition& part) {
  if (j < 0 || j > part.j_max()) {
    std::ostringstream os;
    os << "block index " << j << " outside [0, " << part.j_max() << "]";
    throw ContractViolation(os.str());
  }
}

SampledField zeros_like(const SampledField& f) {
  SampledField z(f.shape(), f.spacing(), f.origin());
  z.set_axes(f.axes());
  return z;
}

double pairing(const SampledField& f, const SampledField& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
  return s * f.cell_volume();
}

}  // namespace

SampledField block(const SampledField& f, int j, const DyadicPartition& part) {
  check_j(j, part);
  const auto s = symbol_norms(f, part.anisotropy());
  return masked(f, spectrum_of(f), s, [j](double x) { return DyadicPartition::phi(j, x); });
}

SampledField enlarged_block(const SampledField& f, int j, const DyadicPartition& part) {
  check_j(j, part);
  const auto s = symbol_norms(f, part.anisotropy());
  return masked(f, spectrum_of(f), s, [j](double x) { return DyadicPartition::phi_enlarged(j, x); });
}

std::vector<SampledField> all_blocks(const SampledField& f, const DyadicPartition& part) {
  const auto s = symbol_norms(f, part.anisotropy());
  const auto fhat = spectrum_of(f);
  std::vector<SampledField> out;
  out.reserve(static_cast<std::size_t>(part.j_max()) + 2);
  for (int j = 0; j <= part.j_max(); ++j)
    out.push_back(masked(f, fhat, s, [j](double x) { return DyadicPartition::phi(j, x); }));
  out.push_back(masked(f, fhat, s, [&part](double x) { return part.tail(x); }));
  return out;
}

BesovNormReport besov_norm(const SampledField& f, double s, const MultiIndex& p,
                           const DyadicPartition& part) {
  BesovNormReport r;
  r.s = s;
  r.p = p;
  r.j_max = part.j_max();
  const auto blocks = all_blocks(f, part);
  for (int j = 0; j <= part.j_max(); ++j) {
    const double b = mixed_lp_norm(blocks[static_cast<std::size_t>(j)], p);
    r.per_block.push_back(b);
    r.norm = std::max(r.norm, std::pow(2.0, s * j) * b);
  }
  r.tail = mixed_lp_norm(blocks.back(), p);
  return r;
}

void to_json(nlohmann::json& j, const BesovNormReport& r) {
  std::vector<nlohmann::json> p;
  for (double v : r.p.values()) p.push_back(std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v));
  j = nlohmann::json{{"s", r.s},         {"p", p},       {"j_max", r.j_max},
                     {"per_block", r.per_block}, {"tail", r.tail}, {"norm", r.norm}};
}

namespace {

std::vector<long> dyadic_shifts(std::size_t n) {
  // For even n the shifts +n/2 and -n/2 coincide.
  const long half = static_cast<long>(n / 2);
  std::vector<long> out{0};
  const auto add = [&](long c) {
    out.push_back(c);
    if (c < half || n % 2 == 1) out.push_back(-c);
  };
  long c = 1;
  for (; c < half; c *= 2) add(c);
  if (half > 0) add(half);
  return out;
}

// f(. + shift) - f on the periodic grid.
SampledField shifted_difference(const SampledField& f, const std::vector<long>& shift) {
  const std::size_t nd = f.ndim();
  SampledField out = zeros_like(f);
  std::vector<std::size_t> idx(nd, 0);
  for (std::size_t flat = 0; flat < f.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < nd; ++a) {
      const auto n = static_cast<long>(f.shape()[a]);
      const long k = ((static_cast<long>(idx[a]) + shift[a]) % n + n) % n;
      src += static_cast<std::size_t>(k) * f.stride(a);
    }
    out[flat] = f[src] - f[flat];
    for (std::size_t a = nd; a-- > 0;) {
      if (++idx[a] < f.shape()[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace

double difference_norm(const SampledField& f, double s, const MultiIndex& p,
                       const AnisotropyVector& a) {
  if (!(s > 0.0 && s < 1.0)) throw ContractViolation("difference_norm needs s in (0, 1)");
  const std::size_t nd = f.ndim();
  if (a.size() != nd || p.size() != nd) throw ContractViolation("dimension mismatch");
  std::vector<std::vector<long>> sets(nd);
  for (std::size_t ax = 0; ax < nd; ++ax) sets[ax] = dyadic_shifts(f.shape()[ax]);

  double sup = 0.0;
  std::vector<std::size_t> ci(nd, 0);
  std::vector<long> shift(nd);
  for (;;) {
    double h_a = 0.0;
    for (std::size_t ax = 0; ax < nd; ++ax) {
      shift[ax] = sets[ax][ci[ax]];
      h_a += std::pow(std::abs(static_cast<double>(shift[ax]) * f.spacing()[ax]), 1.0 / a[ax]);
    }
    if (h_a > 0.0) {
      const double num = mixed_lp_norm(shifted_difference(f, shift), p);
      sup = std::max(sup, num / std::pow(h_a, s));
    }
    std::size_t ax = nd;
    while (ax > 0) {
      --ax;
      if (++ci[ax] < sets[ax].size()) break;
      ci[ax] = 0;
      if (ax == 0) return mixed_lp_norm(f, p) + sup;
    }
  }
}

SampledField spectral_derivative(const SampledField& f, std::size_t axis, int k) {
  if (axis >= f.ndim()) throw ContractViolation("derivative axis out of range");
  if (k < 0) throw ContractViolation("derivative order must be nonnegative");
  if (k == 0) return f;
  auto c = spectrum_of(f);
  const std::size_t n = f.shape()[axis];
  const std::size_t st = f.stride(axis);
  const double L = f.extent(axis);
  for (std::size_t flat = 0; flat < c.size(); ++flat) {
    const std::size_t bin = (flat / st) % n;
    // The Nyquist bin has no consistent sign; odd derivatives drop it.
    if (k % 2 == 1 && n % 2 == 0 && bin == n / 2) {
      c[flat] = 0.0;
      continue;
    }
    const Complex ixi(0.0, angular_frequency(bin, n, L));
    c[flat] *= std::pow(ixi, k);
  }
  return synthesize(f, std::move(c));
}

InequalityRatio bernstein_check(const SampledField& f, int j, int k, std::size_t axis,
                                const MultiIndex& p, const MultiIndex& q,
                                const DyadicPartition& part) {
  if (!(p <= q)) throw PreconditionError("bernstein_check needs p <= q entry-wise");
  if (axis >= f.ndim()) throw ContractViolation("axis out of range");
  const auto& a = part.anisotropy();
  const auto rj = block(f, j, part);
  InequalityRatio out;
  out.lhs = mixed_lp_norm(spectral_derivative(rj, axis, k), q);
  const double gain = a[axis] * k + p.weighted_reciprocal(a) - q.weighted_reciprocal(a);
  const double base = mixed_lp_norm(rj, p);
  out.rhs = std::pow(2.0, j * gain) * base;
  // A block at FFT round-off level carries no information.
  if (base <= 1e-12 * mixed_lp_norm(f, p)) {
    out.degenerate = true;
    return out;
  }
  out.ratio = out.lhs / out.rhs;
  return out;
}

Paraproducts bony_paraproducts(const SampledField& f, const SampledField& g,
                               const DyadicPartition& part) {
  if (!f.same_grid(g)) throw ContractViolation("paraproducts need a common grid");
  const auto bf = all_blocks(f, part);
  const auto bg = all_blocks(g, part);
  const std::size_t nb = bf.size();
  const std::size_t n = f.size();
  Paraproducts out{zeros_like(f), zeros_like(f), zeros_like(f)};
  // Running low-frequency sums S_{k-1} = sum_{i <= k-2} R_i.
  std::vector<double> sf(n, 0.0), sg(n, 0.0);
  for (std::size_t k = 0; k < nb; ++k) {
    if (k >= 2) {
      for (std::size_t x = 0; x < n; ++x) {
        sf[x] += bf[k - 2][x];
        sg[x] += bg[k - 2][x];
      }
    }
    for (std::size_t x = 0; x < n; ++x) {
      out.low_high[x] += sf[x] * bg[k][x];
      out.high_low[x] += bf[k][x] * sg[x];
      double res = bf[k][x] * bg[k][x];
      if (k > 0) res += bf[k][x] * bg[k - 1][x];
      if (k + 1 < nb) res += bf[k][x] * bg[k + 1][x];
      out.resonant[x] += res;
    }
  }
  return out;
}

namespace {

double besov_value(const SampledField& f, const BesovIndex& b, const DyadicPartition& part) {
  return besov_norm(f, b.s, b.p, part).norm;
}

}  // namespace

InequalityRatio interpolation_check(const SampledField& f, const BesovIndex& target,
                                    const BesovIndex& lo, const BesovIndex& hi, double theta,
                                    const DyadicPartition& part) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw PreconditionError("theta must lie in [0, 1]");
  const auto& a = part.anisotropy();
  const auto rp = target.p.reciprocal(), rq = lo.p.reciprocal(), rr = hi.p.reciprocal();
  for (std::size_t i = 0; i < rp.size(); ++i) {
    if (rp[i] > (1.0 - theta) * rq[i] + theta * rr[i] + 1e-12)
      throw PreconditionError("interpolation needs 1/p <= (1-theta)/q + theta/r");
  }
  const double lhs_s = target.s - target.p.weighted_reciprocal(a);
  const double rhs_s = (1.0 - theta) * (lo.s - lo.p.weighted_reciprocal(a)) +
                       theta * (hi.s - hi.p.weighted_reciprocal(a));
  if (std::abs(lhs_s - rhs_s) > 1e-9)
    throw PreconditionError(
        "interpolation needs s - a.(1/p) = (1-theta)(s0 - a.(1/q)) + theta(s1 - a.(1/r))");
  InequalityRatio out;
  out.lhs = besov_value(f, target, part);
  out.rhs = std::pow(besov_value(f, lo, part), 1.0 - theta) * std::pow(besov_value(f, hi, part), theta);
  if (out.rhs == 0.0) {
    out.degenerate = true;
    return out;
  }
  out.ratio = out.lhs / out.rhs;
  return out;
}

InequalityRatio square_root_norm_check(const SampledField& u, double s, const MultiIndex& p,
                                       const AnisotropyVector& a) {
  for (double v : u.values())
    if (v < 0.0) throw PreconditionError("square_root_norm_check needs u >= 0");
  auto u2 = u;
  for (auto& v : u2.values()) v *= v;
  InequalityRatio out;
  out.rhs = difference_norm(u2, s, p, a);
  const double lu = difference_norm(u, s / 2.0, p.scaled(2.0), a);
  out.lhs = lu * lu;
  if (out.rhs == 0.0) {
    out.degenerate = true;
    return out;
  }
  out.ratio = out.lhs / out.rhs;
  return out;
}

InequalityRatio duality_check(const SampledField& f, const SampledField& g, double s,
                              double s_prime, const MultiIndex& p, const MultiIndex& q,
                              const DyadicPartition& part) {
  if (!f.same_grid(g)) throw ContractViolation("duality_check needs a common grid");
  if (!(s_prime > s && s > 0.0)) throw PreconditionError("duality needs s' > s > 0");
  const auto rp = p.reciprocal(), rq = q.reciprocal();
  for (std::size_t i = 0; i < rp.size(); ++i)
    if (std::abs(rp[i] + rq[i] - 1.0) > 1e-12) throw PreconditionError("duality needs 1/p + 1/q = 1");
  InequalityRatio out;
  out.lhs = std::abs(pairing(f, g));
  out.rhs = besov_norm(f, -s, p, part).norm * besov_norm(g, s_prime, q, part).norm;
  if (out.rhs == 0.0) {
    out.degenerate = true;
    return out;
  }
  out.ratio = out.lhs / out.rhs;
  return out;
}

}  // namespace kmv

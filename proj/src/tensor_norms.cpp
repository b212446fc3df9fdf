#include "kmv/tensor_norms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kmv/errors.hpp"

namespace kmv {

AnisotropyVector::AnisotropyVector(std::vector<double> a) : a_(std::move(a)) {
  for (double ai : a_) {
    if (!(ai >= 1.0) || !std::isfinite(ai)) {
      throw ContractViolation("anisotropy entries must be finite and >= 1");
    }
  }
}

AnisotropyVector AnisotropyVector::kinetic(int d) {
  if (d < 1) throw ContractViolation("kinetic anisotropy needs d >= 1");
  std::vector<double> a(2 * static_cast<std::size_t>(d), 1.0);
  std::fill(a.begin(), a.begin() + d, 3.0);
  return AnisotropyVector(std::move(a));
}

AnisotropyVector AnisotropyVector::isotropic(std::size_t n) {
  return AnisotropyVector(std::vector<double>(n, 1.0));
}

double AnisotropyVector::total() const noexcept {
  return std::accumulate(a_.begin(), a_.end(), 0.0);
}

MultiIndex::MultiIndex(std::vector<double> p) : p_(std::move(p)) {
  for (double pi : p_) {
    if (!(pi > 0.0)) throw ContractViolation("multi-index entries must lie in (0, inf]");
  }
}

MultiIndex MultiIndex::uniform(std::size_t n, double p) {
  return MultiIndex(std::vector<double>(n, p));
}

std::vector<double> MultiIndex::reciprocal() const {
  std::vector<double> r(p_.size());
  std::transform(p_.begin(), p_.end(), r.begin(),
                 [](double p) { return std::isinf(p) ? 0.0 : 1.0 / p; });
  return r;
}

double MultiIndex::weighted_reciprocal(const AnisotropyVector& a) const {
  if (a.size() != p_.size()) throw ContractViolation("a and p dimension mismatch");
  const auto r = reciprocal();
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += a[i] * r[i];
  return s;
}

MultiIndex MultiIndex::scaled(double c) const {
  std::vector<double> q(p_);
  for (double& v : q) v *= c;
  return MultiIndex(std::move(q));
}

bool MultiIndex::all_at_least(double lo) const noexcept {
  return std::all_of(p_.begin(), p_.end(), [lo](double p) { return p >= lo; });
}

bool MultiIndex::operator<=(const MultiIndex& o) const {
  if (o.size() != size()) throw ContractViolation("multi-index size mismatch");
  for (std::size_t i = 0; i < size(); ++i)
    if (!(p_[i] <= o.p_[i])) return false;
  return true;
}

bool MultiIndex::operator<(const MultiIndex& o) const {
  if (o.size() != size()) throw ContractViolation("multi-index size mismatch");
  for (std::size_t i = 0; i < size(); ++i)
    if (!(p_[i] < o.p_[i])) return false;
  return true;
}

std::string MultiIndex::to_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < p_.size(); ++i) {
    if (i) os << ',';
    if (std::isinf(p_[i]))
      os << "inf";
    else
      os << p_[i];
  }
  os << ')';
  return os.str();
}

SampledField::SampledField(std::vector<std::size_t> shape, std::vector<double> spacing,
                           std::vector<double> origin)
    : SampledField(shape, std::move(spacing), std::move(origin),
                   std::vector<double>(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                                       std::multiplies<>()),
                                       0.0)) {}

SampledField::SampledField(std::vector<std::size_t> shape, std::vector<double> spacing,
                           std::vector<double> origin, std::vector<double> values)
    : shape_(std::move(shape)),
      spacing_(std::move(spacing)),
      origin_(std::move(origin)),
      values_(std::move(values)),
      axes_(shape_.size(), AxisKind::Other) {
  if (spacing_.size() != shape_.size() || origin_.size() != shape_.size()) {
    throw ContractViolation("shape, spacing and origin must have the same length");
  }
  for (double h : spacing_) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ContractViolation("grid spacing must be positive");
  }
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (shape_.empty() || n == 0) throw ContractViolation("field must have at least one cell");
  if (values_.size() != n) throw ContractViolation("value count does not match shape");
}

void SampledField::set_axes(std::vector<AxisKind> kinds) {
  if (kinds.size() != shape_.size()) throw ContractViolation("one axis label per axis");
  axes_ = std::move(kinds);
}

double SampledField::cell_volume() const noexcept {
  return std::accumulate(spacing_.begin(), spacing_.end(), 1.0, std::multiplies<>());
}

std::size_t SampledField::stride(std::size_t axis) const {
  std::size_t s = 1;
  for (std::size_t a = shape_.size(); a-- > axis + 1;) s *= shape_[a];
  return s;
}

bool SampledField::same_grid(const SampledField& o, double tol) const {
  if (shape_ != o.shape_) return false;
  for (std::size_t a = 0; a < ndim(); ++a) {
    if (std::abs(spacing_[a] - o.spacing_[a]) > tol * spacing_[a]) return false;
    if (std::abs(origin_[a] - o.origin_[a]) > tol * std::max(1.0, std::abs(origin_[a])))
      return false;
  }
  return true;
}

double SampledField::integral() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) * cell_volume();
}

bool KineticCylinder::contains(double t, std::span<const double> x,
                               std::span<const double> v) const {
  if (x.size() != x0.size() || v.size() != v0.size()) {
    throw ContractViolation("cylinder dimension mismatch");
  }
  const double r = radius;
  if (!(std::abs(t - t0) < r * r)) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(std::abs(x[i] - x0[i]) < r * r * r)) return false;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!(std::abs(v[i] - v0[i]) < r)) return false;
  return true;
}

double KineticCylinder::half_width(AxisKind kind) const {
  switch (kind) {
    case AxisKind::Time: return radius * radius;
    case AxisKind::Position: return radius * radius * radius;
    case AxisKind::Velocity: return radius;
    case AxisKind::Other: break;
  }
  throw ContractViolation("cylinder needs labelled (t, x, v) axes");
}

double aniso_distance(std::span<const double> z, std::span<const double> zp,
                      const AnisotropyVector& a) {
  if (z.size() != zp.size() || z.size() != a.size()) {
    throw ContractViolation("aniso_distance: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += std::pow(std::abs(z[i] - zp[i]), 1.0 / a[i]);
  return s;
}

namespace {

// Reduces the trailing axis of a row-major block of `outer * n` values.
std::vector<double> reduce_last_axis(const std::vector<double>& in, std::size_t outer,
                                     std::size_t n, double h, double p) {
  std::vector<double> out(outer);
  for (std::size_t k = 0; k < outer; ++k) {
    const double* row = in.data() + k * n;
    if (std::isinf(p)) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m = std::max(m, row[i]);
      out[k] = m;
    } else if (p == 1.0) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += row[i];
      out[k] = s * h;
    } else if (p == 2.0) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += row[i] * row[i];
      out[k] = std::sqrt(s * h);
    } else {
      // Scale by the row max to keep pow() away from under/overflow.
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m = std::max(m, row[i]);
      if (m == 0.0) {
        out[k] = 0.0;
        continue;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::pow(row[i] / m, p);
      out[k] = m * std::pow(s * h, 1.0 / p);
    }
  }
  return out;
}

double mixed_norm_of_block(std::vector<double> work, const std::vector<std::size_t>& shape,
                           const std::vector<double>& spacing, std::span<const double> p) {
  std::size_t outer = work.size();
  for (std::size_t a = shape.size(); a-- > 0;) {
    outer /= shape[a];
    work = reduce_last_axis(work, outer, shape[a], spacing[a], p[a]);
  }
  return work.front();
}

}  // namespace

double mixed_lp_norm(const SampledField& f, const MultiIndex& p) {
  if (p.size() != f.ndim()) throw ContractViolation("mixed_lp_norm: p has wrong length");
  std::vector<double> work(f.values().size());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double v = f.values()[i];
    if (std::isnan(v)) throw ContractViolation("mixed_lp_norm: NaN in field");
    work[i] = std::abs(v);
  }
  return mixed_norm_of_block(std::move(work), f.shape(), f.spacing(), p.values());
}

namespace {

struct CellRange {
  std::size_t lo = 0;
  std::size_t hi = 0;  // exclusive
};

// Cells whose midpoints satisfy |c - center| < half (a contiguous run).
CellRange cells_within(const SampledField& f, std::size_t axis, double center, double half) {
  const double h = f.spacing()[axis];
  const auto n = static_cast<long>(f.shape()[axis]);
  const auto inside = [&](long i) { return std::abs(f.coordinate(axis, static_cast<std::size_t>(i)) - center) < half; };
  const double rel = (center - f.origin()[axis]) / h - 0.5;
  long lo = std::clamp(static_cast<long>(std::floor(rel - half / h)) - 1, 0L, n);
  long hi = std::clamp(static_cast<long>(std::ceil(rel + half / h)) + 1, -1L, n - 1);
  while (lo <= hi && !inside(lo)) ++lo;
  while (hi >= lo && !inside(hi)) --hi;
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi) + 1};
}

}  // namespace

LocalizedNorm localized_norm(const SampledField& f, double q, const MultiIndex& p, double r) {
  if (!(r > 0.0)) throw ContractViolation("localized_norm: r must be positive");
  if (!(q >= 1.0)) throw ContractViolation("localized_norm: q must lie in [1, inf]");
  const std::size_t nd = f.ndim();
  if (p.size() + 1 != nd) throw ContractViolation("localized_norm: expected (t, z) field with p over z");
  if (f.axes().front() != AxisKind::Time) throw ContractViolation("localized_norm: axis 0 must be time");

  KineticCylinder probe;
  probe.radius = r;
  std::vector<double> half(nd), exps(nd);
  exps[0] = q;
  for (std::size_t a = 0; a < nd; ++a) {
    half[a] = probe.half_width(f.axes()[a]);
    if (a > 0) exps[a] = p[a - 1];
  }

  // Center lattice per axis on cell edges, anchored at edge n/2. With edge
  // centers a half-width that is a whole number of cells is captured exactly.
  std::vector<std::vector<double>> centers(nd);
  for (std::size_t a = 0; a < nd; ++a) {
    const double h = f.spacing()[a];
    const double want = std::min(r / 2.0, half[a] / 2.0);
    const auto step = static_cast<long>(std::max(1.0, std::floor(want / h + 1e-9)));
    const long n = static_cast<long>(f.shape()[a]);
    for (long i = (n / 2) % step; i <= n; i += step)
      centers[a].push_back(f.origin()[a] + static_cast<double>(i) * h);
  }

  LocalizedNorm out;
  out.empty_overlap = true;
  std::vector<std::size_t> ci(nd, 0);
  bool done = false;
  while (!done) {
    std::vector<CellRange> ranges(nd);
    bool empty = false;
    for (std::size_t a = 0; a < nd; ++a) {
      ranges[a] = cells_within(f, a, centers[a][ci[a]], half[a]);
      if (ranges[a].hi == ranges[a].lo) empty = true;
    }
    ++out.centers_probed;
    if (!empty) {
      out.empty_overlap = false;
      std::vector<std::size_t> sub_shape(nd);
      std::size_t count = 1;
      for (std::size_t a = 0; a < nd; ++a) {
        sub_shape[a] = ranges[a].hi - ranges[a].lo;
        count *= sub_shape[a];
      }
      std::vector<double> block(count);
      std::vector<std::size_t> idx(nd, 0);
      for (std::size_t k = 0; k < count; ++k) {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < nd; ++a) flat += (ranges[a].lo + idx[a]) * f.stride(a);
        const double v = f.values()[flat];
        if (std::isnan(v)) throw ContractViolation("localized_norm: NaN in field");
        block[k] = std::abs(v);
        for (std::size_t a = nd; a-- > 0;) {
          if (++idx[a] < sub_shape[a]) break;
          idx[a] = 0;
        }
      }
      out.value = std::max(out.value, mixed_norm_of_block(std::move(block), sub_shape, f.spacing(), exps));
    }
    for (std::size_t a = nd;;) {
      if (a-- == 0) {
        done = true;
        break;
      }
      if (++ci[a] < centers[a].size()) break;
      ci[a] = 0;
    }
  }
  if (out.empty_overlap) out.value = 0.0;
  return out;
}

RadiusRatio equivalence_ratio_across_radii(const SampledField& f, double q, const MultiIndex& p,
                                           double r, double r_prime) {
  if (!(r > 0.0) || !(r_prime > 0.0)) throw ContractViolation("radii must be positive");
  const auto num = localized_norm(f, q, p, r);
  const auto den = localized_norm(f, q, p, r_prime);
  RadiusRatio out;
  if (den.value == 0.0) {
    out.degenerate = true;
    return out;
  }
  out.ratio = num.value / den.value;
  return out;
}

SampledField make_kinetic_field(int d, std::size_t nt, std::size_t nx, std::size_t nv,
                                double t_lo, double t_hi, double x_lo, double x_hi, double v_lo,
                                double v_hi) {
  if (d < 1) throw ContractViolation("d must be >= 1");
  const auto nd = 1 + 2 * static_cast<std::size_t>(d);
  std::vector<std::size_t> shape(nd);
  std::vector<double> spacing(nd), origin(nd);
  std::vector<AxisKind> kinds(nd);
  shape[0] = nt;
  spacing[0] = (t_hi - t_lo) / static_cast<double>(nt);
  origin[0] = t_lo;
  kinds[0] = AxisKind::Time;
  for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i) {
    shape[1 + i] = nx;
    spacing[1 + i] = (x_hi - x_lo) / static_cast<double>(nx);
    origin[1 + i] = x_lo;
    kinds[1 + i] = AxisKind::Position;
    shape[1 + d + i] = nv;
    spacing[1 + d + i] = (v_hi - v_lo) / static_cast<double>(nv);
    origin[1 + d + i] = v_lo;
    kinds[1 + d + i] = AxisKind::Velocity;
  }
  SampledField f(shape, spacing, origin);
  f.set_axes(std::move(kinds));
  return f;
}

}  // namespace kmv

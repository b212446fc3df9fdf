#pragma once

// Mixed L^p norms, anisotropic distance and kinetic cylinders on uniform grids.
//
// Storage order for space-time fields is (t, x_1..x_d, v_1..v_d), row-major with
// the last axis fastest. Mixed norms integrate the LAST axis innermost, so for a
// field over (t, x, v) with exponents (q, p_x, p_v) the value is
//   ( ∫ ( ∫ ( ∫ |f|^{p_v} dv )^{p_x/p_v} dx )^{q/p_x} dt )^{1/q}.
// Cell i along an axis covers [origin + i*h, origin + (i+1)*h) and is sampled at
// its midpoint; all integrals are midpoint sums.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace kmv {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Scaling weights a_i >= 1. The kinetic choice is (3,..,3,1,..,1): positions
/// scale like r^3 and velocities like r.
class AnisotropyVector {
 public:
  AnisotropyVector() = default;
  explicit AnisotropyVector(std::vector<double> a);

  static AnisotropyVector kinetic(int d);
  static AnisotropyVector isotropic(std::size_t n);

  std::size_t size() const noexcept { return a_.size(); }
  double operator[](std::size_t i) const { return a_[i]; }
  std::span<const double> values() const noexcept { return a_; }
  /// |a| = a_1 + ... + a_N
  double total() const noexcept;

 private:
  std::vector<double> a_;
};

/// Integrability multi-index p in (0, inf]^N.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<double> p);
  static MultiIndex uniform(std::size_t n, double p);

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const noexcept { return p_; }

  /// 1/p with 1/inf = 0.
  std::vector<double> reciprocal() const;
  /// a · (1/p)
  double weighted_reciprocal(const AnisotropyVector& a) const;
  MultiIndex scaled(double c) const;

  bool all_at_least(double lo) const noexcept;
  /// Entry-wise comparisons.
  bool operator<=(const MultiIndex& o) const;
  bool operator>=(const MultiIndex& o) const { return o <= *this; }
  bool operator<(const MultiIndex& o) const;
  bool operator>(const MultiIndex& o) const { return o < *this; }
  bool operator==(const MultiIndex& o) const = default;

  std::string to_string() const;

 private:
  std::vector<double> p_;
};

enum class AxisKind { Other, Time, Position, Velocity };

/// Values on a uniform tensor grid with per-axis spacing and lower box edge.
class SampledField {
 public:
  SampledField() = default;
  SampledField(std::vector<std::size_t> shape, std::vector<double> spacing,
               std::vector<double> origin);
  SampledField(std::vector<std::size_t> shape, std::vector<double> spacing,
               std::vector<double> origin, std::vector<double> values);

  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  const std::vector<double>& spacing() const noexcept { return spacing_; }
  const std::vector<double>& origin() const noexcept { return origin_; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  const std::vector<AxisKind>& axes() const noexcept { return axes_; }
  void set_axes(std::vector<AxisKind> kinds);

  /// Midpoint coordinate of cell i along axis.
  double coordinate(std::size_t axis, std::size_t i) const {
    return origin_[axis] + (static_cast<double>(i) + 0.5) * spacing_[axis];
  }
  double cell_volume() const noexcept;
  /// Box length along axis.
  double extent(std::size_t axis) const { return spacing_[axis] * static_cast<double>(shape_[axis]); }
  std::size_t stride(std::size_t axis) const;

  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }

  /// Fills values by evaluating fn at every cell midpoint.
  template <class Fn>
  void fill(Fn&& fn) {
    std::vector<double> z(ndim());
    std::vector<std::size_t> idx(ndim(), 0);
    for (std::size_t flat = 0; flat < values_.size(); ++flat) {
      for (std::size_t a = 0; a < ndim(); ++a) z[a] = coordinate(a, idx[a]);
      values_[flat] = fn(std::span<const double>(z));
      for (std::size_t a = ndim(); a-- > 0;) {
        if (++idx[a] < shape_[a]) break;
        idx[a] = 0;
      }
    }
  }

  bool same_grid(const SampledField& o, double tol = 1e-12) const;
  /// Sum of values times cell volume.
  double integral() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> spacing_;
  std::vector<double> origin_;
  std::vector<double> values_;
  std::vector<AxisKind> axes_;
};

/// Kinetic cylinder Q_r(t0, x0, v0) = {|t-t0| < r^2, |x-x0|_inf < r^3, |v-v0|_inf < r}.
struct KineticCylinder {
  double t0 = 0.0;
  std::vector<double> x0;
  std::vector<double> v0;
  double radius = 1.0;

  bool contains(double t, std::span<const double> x, std::span<const double> v) const;
  double half_width(AxisKind kind) const;
};

/// |z - z'|_a = sum_i |z_i - z'_i|^{1/a_i}
double aniso_distance(std::span<const double> z, std::span<const double> zp,
                      const AnisotropyVector& a);

/// Iterated mixed norm, last axis innermost; inf entries take the max over that axis.
double mixed_lp_norm(const SampledField& f, const MultiIndex& p);

struct LocalizedNorm {
  double value = 0.0;
  /// No cylinder center captured any grid cell.
  bool empty_overlap = false;
  std::size_t centers_probed = 0;
};

/// sup over a lattice of cylinder centers of ||f 1_{Q_r(t0,z0)}|| in L^q_t(L^p_z).
/// The field axes must be labelled (Time, Position.., Velocity..) so the
/// cylinder half-widths r^2, r^3, r can be assigned. Centers sit on cell edges
/// anchored at the middle edge; the stride along an axis is at most
/// min(r/2, half-width/2) and at least one cell.
LocalizedNorm localized_norm(const SampledField& f, double q, const MultiIndex& p, double r);

struct RadiusRatio {
  double ratio = 0.0;
  bool degenerate = false;
};

RadiusRatio equivalence_ratio_across_radii(const SampledField& f, double q, const MultiIndex& p,
                                           double r, double r_prime);

/// Builds a space-time field (t, x_1..x_d, v_1..v_d) with axis labels set.
SampledField make_kinetic_field(int d, std::size_t nt, std::size_t nx, std::size_t nv,
                                double t_lo, double t_hi, double x_lo, double x_hi,
                                double v_lo, double v_hi);

}  // namespace kmv

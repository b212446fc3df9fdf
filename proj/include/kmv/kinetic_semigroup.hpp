#pragma once

// Gaussian semigroup of the Kolmogorov operator Delta_v + v . grad_x:
//   P_t f(x, v) = E f(x + t v + sqrt(2) int_0^t W_s ds, v + sqrt(2) W_t).
// Fields are over (x_1..x_d, v_1..v_d) on a periodic box.

#include <functional>
#include <span>
#include <vector>

#include "kmv/aniso_besov.hpp"
#include "kmv/tensor_norms.hpp"

namespace kmv {

/// Per-dimension law of the noise pair (xi, eta) added to (x + t v, v).
struct KolmogorovGaussian {
  double t = 0.0;
  double var_x() const { return 2.0 * t * t * t / 3.0; }
  double cov_xv() const { return t * t; }
  double var_v() const { return 2.0 * t; }
  double determinant() const { return var_x() * var_v() - cov_xv() * cov_xv(); }
  /// exp(-(t^3 xi^2 / 3 + t^2 xi eta + t eta^2)), the characteristic function.
  double fourier_factor(double xi, double eta) const;
};

/// Nodes 0 = t_0 < .. < t_M = T and left-rectangle weights t_{m+1} - t_m.
class DuhamelSchedule {
 public:
  explicit DuhamelSchedule(std::vector<double> nodes);
  static DuhamelSchedule uniform(double T, std::size_t steps);

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  double horizon() const { return nodes_.back(); }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Spectral P_t f: Gaussian multiplier with the joint (x, v) covariance, then
/// the shear x -> x + t v as an exact phase along the x axes.
SampledField semigroup_apply(const SampledField& f, double t);

using PhaseFunction = std::function<double(std::span<const double>)>;

/// P_t f at a single point z = (x, v) for a callable f by tensor Gauss-Hermite
/// quadrature with `order` nodes per noise coordinate. Exact for polynomials
/// of degree < 2 * order.
double semigroup_apply_pointwise(const PhaseFunction& f, std::span<const double> z, double t,
                                 int order = 12);

/// u(t_k) = sum_{m<k} w_m P_{t_k - t_m} f(t_m), returned for every node (u(t_0) = 0).
std::vector<SampledField> duhamel_solve(const std::function<SampledField(double)>& source,
                                        const DuhamelSchedule& schedule);

using SpaceTimeFunction = std::function<double(double, std::span<const double>)>;

/// Pointwise Duhamel sum at z with the Gauss-Hermite semigroup.
std::vector<double> duhamel_solve_pointwise(const SpaceTimeFunction& source,
                                            std::span<const double> z,
                                            const DuhamelSchedule& schedule, int order = 12);

struct SmoothingFit {
  double slope = 0.0;
  double theoretical = 0.0;  // -(beta - gamma) / 2
  std::vector<double> times;
  std::vector<double> ratios;
};

/// ratio(t) = max over the family of ||P_t f||_{B^beta_p} / ||f||_{B^gamma_p};
/// least-squares slope of log ratio against log t. Needs at least 4 times.
SmoothingFit smoothing_exponent_fit(const std::vector<SampledField>& family, double beta,
                                    double gamma, const MultiIndex& p,
                                    const DyadicPartition& part, const std::vector<double>& times);

/// Ring fields cos(2^j v_1) for j = 0..j_top on [0, 2 pi)^{2d} with n cells per
/// axis; the x axes carry constants.
std::vector<SampledField> ring_family(int d, int j_top, std::size_t n);

}  // namespace kmv

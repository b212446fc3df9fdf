#pragma once

// Interacting particle scheme for the mollified equation
//   dX = V dt,  dV = b^n(t, Z) dt + sqrt(2 a^n(t, X)) dW,
// where b^n and a^n average the coefficients against the empirical law and the
// density enters through a kernel estimate with bandwidth eps_n = c / n.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kmv/coefficients.hpp"
#include "kmv/fpk_solver.hpp"
#include "kmv/rng.hpp"
#include "kmv/tensor_norms.hpp"

namespace kmv {

struct ParticleEnsemble {
  int d = 1;
  double t = 0.0;
  /// Row i holds (x_1..x_d, v_1..v_d) of particle i.
  std::vector<double> z;
  /// Noise stream of each particle; permuting particles permutes this too.
  std::vector<std::uint64_t> stream;
  std::uint64_t seed = 0;
  /// Euler steps taken, used as the noise counter.
  std::uint64_t step = 0;
  /// Mollification level n.
  int level = 1;

  std::size_t size() const { return stream.size(); }
  std::size_t dim() const { return 2 * static_cast<std::size_t>(d); }
  std::span<double> particle(std::size_t i) { return {z.data() + i * dim(), dim()}; }
  std::span<const double> particle(std::size_t i) const { return {z.data() + i * dim(), dim()}; }
  void validate() const;
};

/// Product Gaussian initial law with independent coordinates.
struct InitialLaw {
  std::vector<double> mean;
  std::vector<double> stddev;
  static InitialLaw standard(int d, double sx = 1.0, double sv = 1.0);
};

/// Samples N particles, then truncates every coordinate to [-level, level].
ParticleEnsemble sample_ensemble(int d, std::size_t N, const InitialLaw& law, std::uint64_t seed, int level);

/// Polynomial bump (1 - |w|^2)^4 rescaled per axis: Gamma(w_1/s_1, ..)/prod s_i.
class Mollifier {
 public:
  Mollifier() = default;
  explicit Mollifier(std::vector<double> scales);
  /// Isotropic bandwidth eps on R^n.
  static Mollifier spatial(std::size_t n, double eps);
  /// Phase-space kinetic scaling: x by eps^3, v by eps.
  static Mollifier kinetic(int d, double eps);
  /// Space-time kinetic scaling (t/eps^2, x/eps^3, v/eps).
  static Mollifier kinetic_spacetime(int d, double eps);
  /// eps_n = c / n on R^n.
  static Mollifier from_level(std::size_t n_dims, int level, double c);

  std::size_t dims() const { return scales_.size(); }
  const std::vector<double>& scales() const { return scales_; }
  double operator()(std::span<const double> w) const;
  /// Marginal mollifier on the leading k axes.
  Mollifier leading(std::size_t k) const;

 private:
  std::vector<double> scales_;
  double norm_ = 1.0;
};

/// (1/N) sum_j Gamma(q - Z_j) for each query point (rows of `queries`).
std::vector<double> kde_density(const ParticleEnsemble& ens, std::span<const double> queries,
                                const Mollifier& mol);
/// The same estimate at every cell center of a phase grid.
SampledField kde_on_grid(const ParticleEnsemble& ens, const GridDensity& grid, const Mollifier& mol);

struct ParticleOptions {
  /// eps_n = bandwidth_c / n for the density estimate and coefficient mollification.
  double bandwidth_c = 2.0;
  /// Cap on pair evaluations for O(N^2) sums.
  double pair_budget = 2e8;
  /// Kernel drifts are summed directly up to this N and binned through FFT above it.
  std::size_t direct_threshold = 2048;
  /// Bins per axis for the FFT path (0 picks by dimension).
  std::size_t fft_bins = 0;
  /// Symmetric offset pairs used to mollify the coefficients.
  int offset_pairs = 8;
  /// Test-only: drop the noise term.
  bool noise = true;
};

struct MollifiedCoefficients {
  /// N x d drift rows.
  std::vector<double> b;
  std::vector<Matrix> a;
  /// rho_hat(Z_i), when the drift needs it.
  std::vector<double> density;
  /// <rho_hat>(X_i), when the diffusion needs it.
  std::vector<double> mass_density;
};

/// b_i = (1/N) sum_j b_n(t, Z_i, rho_hat(Z_i), Z_j); a_i = projected average of a_n.
/// Throws BudgetExceeded when a direct sum is over budget.
MollifiedCoefficients mollified_coefficients(const ParticleEnsemble& ens, const CoefficientSpec& spec,
                                             const ParticleOptions& opt = {});

/// One Euler-Maruyama step with synchronous updates. Throws NumericalError naming
/// the first particle whose state becomes non-finite.
ParticleEnsemble em_step(const ParticleEnsemble& ens, const CoefficientSpec& spec, double dt,
                         const ParticleOptions& opt = {});

struct ParticleTrajectory {
  std::vector<ParticleEnsemble> snapshots;
  /// KDE snapshots on the requested grid, aligned with `snapshots`.
  std::vector<SampledField> densities;
  /// Every step state, when requested.
  std::vector<ParticleEnsemble> path;
};

struct SimulateOptions {
  std::vector<double> snapshot_times;
  std::optional<GridDensity> kde_grid;
  bool keep_path = false;
};

ParticleTrajectory simulate(const ParticleEnsemble& ens0, const CoefficientSpec& spec, double T, double dt,
                            const SimulateOptions& sim = {}, const ParticleOptions& opt = {});

/// Binary ensemble snapshot: "KMVE", u32 version, u32 d, u64 N, f64 t, u64 seed,
/// then N x 2d f64.
void write_ensemble(std::ostream& os, const ParticleEnsemble& ens);
ParticleEnsemble read_ensemble(std::istream& is);
void write_ensemble(const std::string& path, const ParticleEnsemble& ens);
ParticleEnsemble read_ensemble(const std::string& path);

struct WassersteinResult {
  double value = 0.0;
  /// Entropic regularization used (0 for the exact 1-D path).
  double regularization = 0.0;
  bool exact = false;
  std::size_t points = 0;
};

struct WassersteinOptions {
  /// Regularization relative to the mean pairwise cost.
  double relative_reg = 0.05;
  int max_iter = 1000;
  /// L1 error of the row marginals at convergence.
  double tol = 1e-5;
  /// Larger clouds are thinned to this many points by a fixed stride.
  std::size_t max_points = 500;
};

/// W2 between point clouds of dimension `dim` (rows). Exact by sorting when dim == 1,
/// otherwise a debiased entropic (Sinkhorn) estimate.
WassersteinResult wasserstein2(std::span<const double> a, std::span<const double> b, std::size_t dim,
                               const WassersteinOptions& opt = {});
WassersteinResult wasserstein2(const ParticleEnsemble& a, const ParticleEnsemble& b,
                               const WassersteinOptions& opt = {});
/// sqrt(mean_i |Z_i - Z'_i|^2) for ensembles sharing noise streams, an upper bound on W2.
double coupling_distance(const ParticleEnsemble& a, const ParticleEnsemble& b);

using SpaceTimeTest = std::function<double(double t, std::span<const double> z)>;

/// Box for the space-time norm of a test field.
struct NormGrid {
  std::size_t nt = 16;
  std::size_t nx = 32;
  std::size_t nv = 32;
  double half_x = 4.0;
  double half_v = 4.0;
};

struct KrylovExponents {
  double q0 = 1.5;
  MultiIndex p0;
  double alpha0 = 0.0;
};

/// Throws PreconditionError unless 1 - alpha0 < 2/q0 and 2/q0 + a.(1/p0) < 2 - 2 alpha0.
void check_krylov_exponents(const KrylovExponents& e, int d);

struct KrylovReport {
  std::vector<double> deltas;
  /// E int_tau^{tau + delta} f(r, Z_r) dr
  std::vector<double> lhs;
  std::vector<double> norms;
  std::vector<double> ratios;
  /// Slope of log ratio against log delta.
  double theta = 0.0;
};

/// Uses the stored path of `traj` (left Riemann sum in time). The norm of
/// f 1_{[tau, tau + delta]} is L^{q0}_t of the (alpha0, p0) Besov norm in z, or of the
/// mixed L^{p0} norm when alpha0 = 0.
KrylovReport krylov_check(const ParticleTrajectory& traj, const SpaceTimeTest& f, const KrylovExponents& e,
                          double tau, const std::vector<double>& deltas, const NormGrid& grid = {});

struct StabilityPair {
  int level = 0;
  int finer = 0;
  double l1 = 0.0;
  double w2 = 0.0;
  double coupling = 0.0;
};

struct StabilityReport {
  std::vector<std::uint64_t> seeds;
  /// Per seed, one entry per consecutive level pair.
  std::vector<std::vector<StabilityPair>> pairs;
  /// Distances decrease along the levels for every seed.
  bool monotone_l1 = false;
  bool monotone_coupling = false;
};

struct StabilityConfig {
  std::vector<int> levels{4, 8, 16, 32};
  std::vector<std::uint64_t> seeds{11, 23, 47};
  std::size_t N = 4000;
  double T = 0.5;
  double dt = 0.01;
  InitialLaw law = InitialLaw::standard(1);
  /// Common grid and bandwidth for comparing densities across levels.
  GridDensity eval_grid;
  double eval_bandwidth = 0.4;
};

StabilityReport stability_sweep(const CoefficientSpec& spec, const StabilityConfig& cfg,
                                const ParticleOptions& opt = {});

}  // namespace kmv

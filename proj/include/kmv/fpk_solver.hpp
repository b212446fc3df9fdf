#pragma once

// Grid solver for the kinetic Fokker-Planck equation in divergence form
//   d_t rho = div_v(abar grad_v rho) - v . grad_x rho - div_v(bbar rho)
// on [-Lx, Lx]^d x [-Lv, Lv]^d, periodic in x with zero-flux walls in v.
// The drift enters with the sign of the forward equation of
// dX = V dt, dV = b dt + sqrt(2 a) dW.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "kmv/coefficients.hpp"
#include "kmv/tensor_norms.hpp"

namespace kmv {

struct GridDensity {
  double t = 0.0;
  int d = 1;
  /// Axes (x_1..x_d, v_1..v_d).
  SampledField rho;

  std::size_t nx() const { return rho.shape()[0]; }
  std::size_t nv() const { return rho.shape()[static_cast<std::size_t>(d)]; }
  double half_x() const { return 0.5 * rho.extent(0); }
  double half_v() const { return 0.5 * rho.extent(static_cast<std::size_t>(d)); }
  double mass() const { return rho.integral(); }
  /// Number of x cells (nx^d) and v cells per x cell (nv^d).
  std::size_t x_cells() const;
  std::size_t v_cells() const;
};

/// Zero density on the phase box with axis labels set; d in {1, 2}.
GridDensity make_phase_grid(int d, std::size_t nx, std::size_t nv, double half_x, double half_v);

/// Scales rho to unit mass. Throws NumericalError when the mass is not positive.
void normalize_mass(GridDensity& g);

/// Sum |f - g| times the cell volume.
double l1_distance(const SampledField& f, const SampledField& g);

struct PhaseMoments {
  double mass = 0.0;
  /// Mean and covariance of (x, v), size 2d.
  Eigen::VectorXd mean;
  Matrix cov;
};
PhaseMoments moments(const GridDensity& g);

struct EffectiveFields {
  /// abar per x cell, flattened like the x axes.
  std::vector<Matrix> abar;
  /// bbar component fields over the (x, v) grid.
  std::vector<SampledField> bbar;
  /// <rho>(x) = integral of rho over v, per x cell.
  std::vector<double> mass_density;
};

struct SolverOptions {
  /// Cap on pair evaluations for the general (non-convolutional) forms.
  double pair_budget = 5e7;
  double cfl_safety = 0.9;
};

/// abar(x) = sum a(t, x, <rho>(x), z') rho(z') dz', projected to [kappa0, kappa1];
/// bbar(z) = sum b(t, z, rho(z), z') rho(z') dz'. Kernel drifts are convolved by
/// FFT, periodic (minimal image) in x and zero-padded in v.
EffectiveFields effective_coefficients(const GridDensity& g, const CoefficientSpec& spec,
                                       const SolverOptions& opt = {});

/// Direct O(G^2) evaluation of bbar for oracles; ignores the budget.
std::vector<SampledField> drift_direct_sum(const GridDensity& g, const CoefficientSpec& spec);

struct StepLog {
  double clip_mass = 0.0;
  double mass_error = 0.0;
  /// Mass in the outermost velocity cells after the step.
  double boundary_mass = 0.0;
};

/// Largest dt allowed by min(dv^2 / (2 d kappa1), dx / Lv) times the safety factor.
double cfl_limit(const GridDensity& g, const CoefficientSpec& spec, const SolverOptions& opt = {});

/// One Strang step: half exact transport, velocity diffusion and drift with
/// coefficients refreshed at the intermediate state, half transport. Throws
/// CflError carrying the admissible dt, including the drift-aware positivity bound.
GridDensity fpk_step(const GridDensity& g, const CoefficientSpec& spec, double dt,
                     StepLog* log = nullptr, const SolverOptions& opt = {});

struct RunLog {
  std::size_t steps = 0;
  double dt = 0.0;
  double clip_mass = 0.0;
  double max_step_mass_error = 0.0;
  double cumulative_mass_error = 0.0;
  double boundary_leakage = 0.0;
};

struct FpkTrajectory {
  std::vector<GridDensity> snapshots;
  RunLog log;
};

/// Steps from g0.t to T; snapshots at g0.t, at each requested output time and at T.
FpkTrajectory fpk_solve(const GridDensity& g0, const CoefficientSpec& spec, double T, double dt,
                        const std::vector<double>& output_times = {}, const SolverOptions& opt = {});

/// {spec hash, grid, dt, clip mass, boundary leakage, mass errors}
nlohmann::json run_metadata(const CoefficientSpec& spec, const GridDensity& g, const RunLog& log);

using SpaceTimeSource = std::function<double(double t, std::span<const double> z)>;
using TerminalValue = std::function<double(std::span<const double> z)>;

struct BackwardSolution {
  int d = 1;
  std::vector<double> times;
  std::vector<SampledField> u;
  /// Multilinear in (x, v), periodic in x and clamped in v, linear in t.
  double value(double t, std::span<const double> z) const;
};

/// Solves d_t u + tr(abar D_v^2 u) + v . grad_x u + bbar . grad_v u = f with u(T) = terminal
/// (zero by default) on [path.front().t, T]. Coefficients come from the latest
/// snapshot at or before each time. Zero-flux walls in v.
BackwardSolution backward_kolmogorov_solve(const std::vector<GridDensity>& path,
                                           const CoefficientSpec& spec, const SpaceTimeSource& f,
                                           double T, double dt,
                                           const std::optional<TerminalValue>& terminal = std::nullopt,
                                           const SolverOptions& opt = {});

}  // namespace kmv

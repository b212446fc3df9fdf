#pragma once

// Numerical probes of the De Giorgi machinery: the two iteration lemmas, fitting of
// class constants on nested kinetic cylinders, and local sup bounds on sampled
// solutions. Everything here is checked on a finite lattice of (tau, sigma, kappa)
// and certifies nothing beyond the probed points.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kmv/fpk_solver.hpp"
#include "kmv/tensor_norms.hpp"

namespace kmv {

/// Nonnegative a_1, a_2, .. with a_{n+1} <= C0 lambda^n a_n^{1+delta}. Construction
/// from data checks every term and throws PreconditionError at the first violation.
class IterationSequence {
 public:
  IterationSequence(std::vector<double> a, double C0, double lambda, double delta);

  const std::vector<double>& terms() const noexcept { return a_; }
  double C0() const noexcept { return C0_; }
  double lambda() const noexcept { return lambda_; }
  double delta() const noexcept { return delta_; }

 private:
  std::vector<double> a_;
  double C0_, lambda_, delta_;
};

/// (C0 lambda^{(1+delta)/delta})^{-1/delta}
double iteration_threshold(double C0, double lambda, double delta);

enum class IterationVerdict { ToZero, Diverges, Undecided };
std::string to_string(IterationVerdict v);

struct IterationResult {
  /// a_1 .. a_{n_max} of the extremal recursion, truncated at overflow.
  std::vector<double> sequence;
  IterationVerdict verdict = IterationVerdict::Undecided;
  double threshold = 0.0;
  bool below_threshold = false;
};

/// Iterates a_{n+1} = C0 lambda^n a_n^{1+delta}. ToZero when every term in the
/// second half of the run is below 1e-8, Diverges on overflow.
IterationResult iterate_to_zero(double a1, double C0, double lambda, double delta, std::size_t n_max = 200);

/// h sampled at increasing points tau_1 < .. < tau_M.
struct SampledProfile {
  std::vector<double> tau;
  std::vector<double> h;
};

/// Checks h(tau) <= theta h(tau') + (tau' - tau)^{-alpha} A + B for all lattice pairs,
/// throwing PreconditionError naming the first violating pair, then returns
/// h(tau_1) / ((tau_M - tau_1)^{-alpha} A + B).
double absorb_lemma_check(const SampledProfile& h, double theta, double alpha, double A, double B);

/// Constant of the absorption argument with geometric radii mu^k, mu^alpha = (1 + theta)/2:
/// max((1 - mu)^{-alpha} / (1 - theta mu^{-alpha}), 1 / (1 - theta)).
double absorption_constant(double alpha, double theta);

/// Q_tau = kinetic cylinder of radius scale * tau about (t0, x0, v0), tau in [1, 2].
struct CylinderFamily {
  double t0 = 0.0;
  std::vector<double> x0;
  std::vector<double> v0;
  double scale = 1.0;

  KineticCylinder at(double tau) const;
};

/// Finite stand-in for the index set: indices p_1..p_m in (1, inf)^N, the first
/// `split` of them acting on truncations and the rest on level sets.
struct IndexFamily {
  std::vector<MultiIndex> indices;
  std::size_t split = 1;

  void validate(std::size_t ndim) const;
};

struct TruncationEnergy {
  /// kappa_n = kappa (1 - 2^{1-n}), n = 1..levels.
  std::vector<double> kappas;
  /// tau_n = tau + (sigma - tau) 2^{1-n}.
  std::vector<double> radii;
  /// energies[k][n] = ||1_{Q_{tau_n}} (u - kappa_n)^+|| in norms[k].
  std::vector<std::vector<double>> energies;

  static TruncationEnergy compute(const SampledField& u, const CylinderFamily& Q, double kappa, double tau,
                                  double sigma, std::size_t levels, const std::vector<MultiIndex>& norms);
};

struct CertificateOptions {
  IndexFamily family;
  double lambda = 1.0;
  double A = 0.0;
  /// Indices p whose constants are measured; empty means the family indices.
  std::vector<MultiIndex> targets;
  /// tau, sigma lattice; defaults to 1, 1.125, .., 2.
  std::vector<double> taus;
  /// Truncation levels; defaults to a ladder from the data range.
  std::vector<double> kappas;
  std::size_t kappa_levels = 8;
};

struct DeGiorgiCertificate {
  IndexFamily family;
  double lambda = 0.0;
  double A = 0.0;
  std::vector<MultiIndex> targets;
  /// Smallest C_p over the lattice, one per target; infinite when some probe
  /// has a zero right side and a positive left side.
  std::vector<double> constants;
  std::vector<double> taus;
  std::vector<double> kappas;
  std::size_t probes = 0;

  bool finite() const;
  /// {indices, split, lambda, A, targets, constants, lattice, scope}.
  nlohmann::json to_json() const;
};

/// Builds kappa_k = lo + (hi - lo)(1 - 2^{-k}), k = 0..levels-1, where hi is the max
/// of u on Q_2 and lo = max(0, min of u on Q_2).
std::vector<double> kappa_ladder(const SampledField& u, const CylinderFamily& Q, std::size_t levels);

/// The field axes must be labelled (Time, Position.., Velocity..) and the grid must
/// cover Q_2. Throws ContractViolation when two lattice radii select the same cells.
DeGiorgiCertificate fit_certificate(const SampledField& u, const CylinderFamily& Q, const CertificateOptions& opt);

struct LocalBound {
  /// ||u^+ 1_{Q_tau}||_inf
  double lhs = 0.0;
  /// ||u^+ 1_{Q_sigma}||_{L^p}
  double norm = 0.0;
  /// (sigma - tau)^{-gamma} norm + A
  double rhs = 0.0;
  double ratio = 0.0;
  /// Both sides vanish.
  bool degenerate = false;
  /// Zero right side with a positive left side.
  bool inconsistent = false;
};

/// gamma defaults to the certificate's lambda.
LocalBound local_bound_check(const SampledField& u, const DeGiorgiCertificate& cert, const CylinderFamily& Q,
                             double p, double tau, double sigma, std::optional<double> gamma = {});

/// Stacks phase-space snapshots at uniformly spaced times into a (t, x, v) field.
SampledField stack_snapshots(const std::vector<GridDensity>& snaps);

}  // namespace kmv

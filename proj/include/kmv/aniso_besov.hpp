#pragma once

// Anisotropic Littlewood-Paley blocks on periodic boxes.
//
// Frequencies are angular, xi_i = 2 pi k_i / L_i. The base cutoff is a C^2
// smoothstep of s = |xi|_a = sum_i |xi_i|^{1/a_i}:
//   psi(s) = 1 for s <= 1, 0 for s >= 2, 1 - (6u^5 - 15u^4 + 10u^3) with u = s - 1 between.
// phi_0 = psi(s) and phi_j = psi(2^-j s) - psi(2^{1-j} s) for j >= 1, so the
// rings telescope: sum_{j<=J} phi_j = psi(2^-J s).

#include <cmath>
#include <vector>

#include "json.hpp"

#include "kmv/tensor_norms.hpp"

namespace kmv {

enum class JmaxRule {
  /// Smallest J with 2^J >= max grid |xi|_a: blocks sum to f exactly, zero tail.
  Complete,
  /// Largest J whose closed ring {|xi|_a <= 2^{J+1}} is resolvable on every axis.
  ResolvedRing,
};

class DyadicPartition {
 public:
  DyadicPartition(AnisotropyVector a, int j_max);
  static DyadicPartition for_grid(const SampledField& f, const AnisotropyVector& a,
                                  JmaxRule rule = JmaxRule::Complete);

  int j_max() const noexcept { return j_max_; }
  const AnisotropyVector& anisotropy() const noexcept { return a_; }

  static double psi(double s);
  /// phi_j evaluated at s = |xi|_a.
  static double phi(int j, double s);
  /// Enlarged ring phi_{j-1} + phi_j + phi_{j+1} (equal to 1 on supp phi_j).
  static double phi_enlarged(int j, double s);
  /// 1 - psi(2^-J s): what the retained blocks miss.
  double tail(double s) const { return 1.0 - psi(std::ldexp(s, -j_max_)); }

 private:
  AnisotropyVector a_;
  int j_max_ = 0;
};

/// |xi|_a at every grid frequency of f (FFT bin order).
std::vector<double> symbol_norms(const SampledField& f, const AnisotropyVector& a);

/// R_j f. Throws ContractViolation for j outside [0, j_max].
SampledField block(const SampledField& f, int j, const DyadicPartition& part);
/// Enlarged block R~_j f.
SampledField enlarged_block(const SampledField& f, int j, const DyadicPartition& part);
/// R_0 f, .., R_J f followed by the tail as block J+1; they sum to f.
std::vector<SampledField> all_blocks(const SampledField& f, const DyadicPartition& part);

struct BesovNormReport {
  double s = 0.0;
  MultiIndex p;
  int j_max = 0;
  std::vector<double> per_block;
  /// L^p norm of what lies beyond j_max (0 for the complete rule).
  double tail = 0.0;
  double norm = 0.0;
};

/// sup_{j <= j_max} 2^{sj} ||R_j f||_{L^p}.
BesovNormReport besov_norm(const SampledField& f, double s, const MultiIndex& p,
                           const DyadicPartition& part);
void to_json(nlohmann::json& j, const BesovNormReport& r);

/// ||f||_p + sup_h ||f(.+h) - f||_p / |h|_a^s over periodic grid shifts whose
/// per-axis cell counts lie in {0, +-1, +-2, +-4, .., n/2}.
double difference_norm(const SampledField& f, double s, const MultiIndex& p,
                       const AnisotropyVector& a);

struct InequalityRatio {
  double ratio = 0.0;
  bool degenerate = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

/// ||d^k_{z_i} R_j f||_q / (2^{j(a_i k + a.(1/p - 1/q))} ||R_j f||_p), spectral derivative.
/// Degenerate when ||R_j f||_p is below 1e-12 ||f||_p.
InequalityRatio bernstein_check(const SampledField& f, int j, int k, std::size_t axis,
                                const MultiIndex& p, const MultiIndex& q,
                                const DyadicPartition& part);

struct Paraproducts {
  SampledField low_high;   // f < g  = sum_k S_{k-1} f  R_k g
  SampledField resonant;   // f o g  = sum_{|i-k|<=1} R_i f R_k g
  SampledField high_low;   // g < f  = sum_i R_i f  S_{i-1} g
};
Paraproducts bony_paraproducts(const SampledField& f, const SampledField& g,
                               const DyadicPartition& part);

struct BesovIndex {
  double s = 0.0;
  MultiIndex p;
};

/// ||f||_{B^s_p} / (||f||_{B^{s0}_q}^{1-theta} ||f||_{B^{s1}_r}^theta). Throws
/// PreconditionError unless 1/p <= (1-theta)/q + theta/r entry-wise and
/// s - a.(1/p) = (1-theta)(s0 - a.(1/q)) + theta(s1 - a.(1/r)).
InequalityRatio interpolation_check(const SampledField& f, const BesovIndex& target,
                                    const BesovIndex& lo, const BesovIndex& hi, double theta,
                                    const DyadicPartition& part);

/// ||u||^2_{B^{s/2}_{2p}} / ||u^2||_{B^s_p} with both sides in the difference
/// characterization. Throws PreconditionError if u has negative values.
InequalityRatio square_root_norm_check(const SampledField& u, double s, const MultiIndex& p,
                                       const AnisotropyVector& a);

/// |<f, g>| / (||f||_{B^{-s}_p} ||g||_{B^{s'}_q}) with the discrete pairing.
InequalityRatio duality_check(const SampledField& f, const SampledField& g, double s,
                              double s_prime, const MultiIndex& p, const MultiIndex& q,
                              const DyadicPartition& part);

/// Spectral derivative d^k / dz_axis^k on the periodic box.
SampledField spectral_derivative(const SampledField& f, std::size_t axis, int k);

}  // namespace kmv

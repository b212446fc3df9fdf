#pragma once

// Scenario files (TOML). Every section is optional except [coefficients]:
//
//   name = "ou-1d"            seed = 42            d = 1
//   [coefficients]  preset = "linear"   [coefficients.params] beta = 1.0
//   [initial]       mean = [0, 0]       stddev = [1, 1]        (x.., v.., or scalars)
//   [grid]          enabled, nx, nv, half_x, half_v, dt
//   [particles]     enabled, N, level, dt, bandwidth_c, kde_bandwidth
//   [schedule]      T, snapshots = [..]
//   [exponents]     q1, p1                      drift integrability
//   [diagnostics]   frames, besov, besov_pairs = [[q, p, alpha], ..],
//                   krylov, krylov_q0, krylov_p0, krylov_alpha0, krylov_tau,
//                   krylov_deltas, krylov_radius, degiorgi, degiorgi_lambda,
//                   degiorgi_A, stability, stability_levels, stability_seeds,
//                   stability_N
//
// Unknown keys are rejected. Exponent conditions are validated at load and the
// error names the violated inequality.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "kmv/coefficients.hpp"
#include "kmv/errors.hpp"
#include "kmv/particle_system.hpp"

namespace kmv {

class ScenarioError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

struct GridConfig {
  bool enabled = true;
  std::size_t nx = 128;
  std::size_t nv = 128;
  double half_x = 6.0;
  double half_v = 6.0;
  /// Defaults to the CFL limit.
  std::optional<double> dt;
};

struct ParticleConfig {
  bool enabled = true;
  std::size_t N = 10000;
  int level = 16;
  double dt = 0.01;
  double bandwidth_c = 2.0;
  /// KDE bandwidth for the particle/grid comparison; 0 means bandwidth_c / level.
  double kde_bandwidth = 0.0;
};

struct BesovPair {
  double q = 2.0;
  MultiIndex p;
  double alpha = 0.1;
};

struct DriftExponents {
  double q1 = 3.0;
  MultiIndex p1;
};

struct Diagnostics {
  /// Uniform frames on [0, T] used by the Besov table and the De Giorgi fit.
  std::size_t frames = 20;
  bool besov = false;
  std::vector<BesovPair> besov_pairs;
  bool krylov = false;
  KrylovExponents krylov_exponents;
  double krylov_tau = 0.0;
  std::vector<double> krylov_deltas;
  double krylov_radius = 1.0;
  bool degiorgi = false;
  double degiorgi_lambda = 2.0;
  double degiorgi_A = 0.0;
  bool stability = false;
  std::vector<int> stability_levels{4, 8, 16};
  std::vector<std::uint64_t> stability_seeds;
  std::size_t stability_N = 2000;
};

struct Scenario {
  std::string name = "scenario";
  int d = 1;
  std::uint64_t seed = 0;
  std::string preset;
  std::map<std::string, double> params;
  /// Product Gaussian initial law, entries (x.., v..).
  std::vector<double> mean;
  std::vector<double> stddev;
  GridConfig grid;
  ParticleConfig particles;
  double T = 1.0;
  std::vector<double> snapshots;
  std::optional<DriftExponents> drift_exponents;
  Diagnostics diagnostics;

  CoefficientSpec coefficients() const;
  InitialLaw initial_law() const;
  /// Canonical form with every default filled in; the seed is left out.
  nlohmann::json to_json() const;
  /// FNV-1a over the canonical JSON dump.
  std::uint64_t hash() const;
};

/// Throws ScenarioError on syntax errors, unknown keys, bad values or violated
/// exponent conditions.
Scenario parse_scenario(std::string_view toml_text);
Scenario load_scenario(const std::filesystem::path& path);
void validate(const Scenario& s);

/// Exponent checks shared with the CLI; each throws ScenarioError quoting the inequality.
void check_drift_exponents(const DriftExponents& e, int d, bool density_dependent);
void check_krylov_condition(const KrylovExponents& e, int d);
void check_besov_pair(const BesovPair& b, int d);

std::string hex64(std::uint64_t h);

}  // namespace kmv

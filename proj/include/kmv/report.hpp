#pragma once

// Scenario orchestration and run reports.
//
// Seeds: the master seed (scenario `seed`, or the --seed override) is split with
// derive_seed(master, component) for the components "particles" and
// "stability/<k>" (k-th sweep seed, unless the scenario lists them).
//
// Artifacts written to the output directory:
//   report.json            the RunReport below
//   manifest.json          scenario hash, seeds, spec hash and file list
//   grid_<k>.bin           grid density at snapshot k (field format)
//   particles_<k>.kmve     ensemble at snapshot k
//   kde_<k>.bin            particle KDE on the grid at snapshot k

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "kmv/scenario.hpp"

namespace kmv {

inline constexpr int kReportSchemaVersion = 1;

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  bool write_artifacts = true;
};

/// Runs the grid solver, the particle system and the enabled diagnostics. The
/// report carries no timestamps, so equal scenario hashes and seeds give equal reports.
nlohmann::json run_scenario(const Scenario& s, const RunOptions& opt);

/// Walks both reports and lists b - a for every numeric leaf present in both,
/// plus paths present in only one of them. Throws ContractViolation when the
/// schema versions differ.
nlohmann::json compare_reports(const nlohmann::json& a, const nlohmann::json& b);

/// Closed-form moments under b = 0, a = a0 I from a product Gaussian law:
/// mean (x + t v, v) and per-axis (Var x, Cov, Var v) =
/// (sx^2 + t^2 sv^2 + 2 a0 t^3 / 3, t sv^2 + a0 t^2, sv^2 + 2 a0 t).
struct GaussianMoments {
  std::vector<double> mean;
  std::vector<double> var_x, cov_xv, var_v;
};
GaussianMoments free_gaussian_moments(const std::vector<double>& mean, const std::vector<double>& stddev, double a0,
                                      double t);

}  // namespace kmv

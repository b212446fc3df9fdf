#pragma once

// Coefficient model b(t, z, r, z') and a(t, x, r, z') shared by the grid
// solver and the particle scheme. The drift is split into optional parts
//   b = g(t, z, r) + K(t, z - z') + G(t, z, r, z'),
// and the diffusion is either constant, pointwise a(t, x, r) or general.
// Here r is the density at z for the drift and the mass density <rho>(x) for
// the diffusion. Phase points are z = (x_1..x_d, v_1..v_d).

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kmv/matrix_ops.hpp"

namespace kmv {

using LocalDrift = std::function<void(double t, std::span<const double> z, double r, std::span<double> out)>;
using KernelDrift = std::function<void(double t, std::span<const double> w, std::span<double> out)>;
using GeneralDrift = std::function<void(double t, std::span<const double> z, double r,
                                        std::span<const double> zp, std::span<double> out)>;
using LocalDiffusion = std::function<Matrix(double t, std::span<const double> x, double r)>;
using GeneralDiffusion =
    std::function<Matrix(double t, std::span<const double> x, double r, std::span<const double> zp)>;

enum class CoefficientForm { Constant, Pointwise, Convolutional, General };

std::string to_string(CoefficientForm f);

struct CoefficientSpec {
  int d = 1;
  std::string name;
  std::map<std::string, double> params;

  LocalDrift drift_local;
  KernelDrift drift_kernel;
  GeneralDrift drift_general;

  std::optional<Matrix> diffusion_constant;
  LocalDiffusion diffusion_local;
  GeneralDiffusion diffusion_general;

  double kappa0 = 1.0;
  double kappa1 = 1.0;
  /// Lipschitz constant of b in r, when declared.
  std::optional<double> density_lipschitz;
  /// Global bound |b| <= H, when declared.
  std::optional<double> drift_bound;
  /// Drift depends on the density value r.
  bool drift_uses_density = false;
  /// Diffusion depends on the mass density r.
  bool diffusion_uses_density = false;

  /// Derived from which parts are present.
  CoefficientForm form() const;
  bool has_drift() const { return drift_local || drift_kernel || drift_general; }

  /// Full b(t, z, r, z') for oracles and direct sums.
  void drift(double t, std::span<const double> z, double r, std::span<const double> zp,
             std::span<double> out) const;
  /// Full a(t, x, r, z').
  Matrix diffusion(double t, std::span<const double> x, double r, std::span<const double> zp) const;

  /// Throws ContractViolation when no diffusion is given or the band is invalid.
  void validate() const;
  /// FNV-1a over the canonical name/parameter string.
  std::uint64_t hash() const;
};

/// Named presets. Parameters not given fall back to documented defaults.
///   constant-diffusion   b = 0, a = a0 I                           (a0 = 0.5)
///   ornstein-uhlenbeck   b = -gamma v, a = a0 I                    (gamma = 1, a0 = 1)
///   linear               b = -beta tanh(v), a = a0 I               (beta = 1, a0 = 0.5)
///   bounded-measurable   b = -beta tanh(v) - eta r/(1+r) v/(1+|v|),
///                        a = a_lo I if sin(x_1) >= 0 else a_hi I   (beta = 1, eta = 0.5, a_lo = 0.5, a_hi = 0.75)
///   convolutional        b = K * rho with K(w) = -beta tanh(w_v),
///                        a = a0 I                                  (beta = 1, a0 = 0.5)
///   landau-variant       K(w) = -c (d-1) w_v (|w_v|^2 + eps^2)^{-(gamma+d+2)/2} chi_ell(w_x),
///                        a = a0 I                                  (c = 1, gamma = -1, eps = 0.5, ell = 0.5, a0 = 0.5)
CoefficientSpec make_preset(const std::string& name, int d,
                            const std::map<std::string, double>& params = {});

std::vector<std::string> preset_names();

}  // namespace kmv

#pragma once

#include <cmath>
#include <span>

namespace kmv {

/// Normalizing constant of (1 - |z|^2)^4 on the unit ball of R^n:
/// the integral is pi^{n/2} 4! / Gamma(n/2 + 5).
inline double bump_normalizer(std::size_t n) {
  const double half = 0.5 * static_cast<double>(n);
  return std::tgamma(half + 5.0) / (24.0 * std::pow(3.14159265358979323846, half));
}

/// Unit-mass polynomial bump c_n (1 - |z|^2)^4 supported in |z| <= 1.
inline double bump(std::span<const double> z) {
  double r2 = 0.0;
  for (double c : z) r2 += c * c;
  if (r2 >= 1.0) return 0.0;
  const double u = 1.0 - r2;
  return bump_normalizer(z.size()) * u * u * u * u;
}

}  // namespace kmv

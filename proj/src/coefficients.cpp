#include "kmv/coefficients.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

#include "kmv/bump.hpp"
#include "kmv/errors.hpp"

namespace kmv {

std::string to_string(CoefficientForm f) {
  switch (f) {
    case CoefficientForm::Constant: return "constant";
    case CoefficientForm::Pointwise: return "pointwise";
    case CoefficientForm::Convolutional: return "convolutional";
    case CoefficientForm::General: return "general";
  }
  return "unknown";
}

CoefficientForm CoefficientSpec::form() const {
  if (drift_general || diffusion_general) return CoefficientForm::General;
  if (drift_kernel) return CoefficientForm::Convolutional;
  if (drift_local || diffusion_local) return CoefficientForm::Pointwise;
  return CoefficientForm::Constant;
}

void CoefficientSpec::drift(double t, std::span<const double> z, double r,
                            std::span<const double> zp, std::span<double> out) const {
  const auto n = static_cast<std::size_t>(d);
  if (z.size() != 2 * n || zp.size() != 2 * n || out.size() != n)
    throw ContractViolation("drift: dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> tmp(n);
  if (drift_local) {
    drift_local(t, z, r, tmp);
    for (std::size_t i = 0; i < n; ++i) out[i] += tmp[i];
  }
  if (drift_kernel) {
    std::vector<double> w(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) w[i] = z[i] - zp[i];
    drift_kernel(t, w, tmp);
    for (std::size_t i = 0; i < n; ++i) out[i] += tmp[i];
  }
  if (drift_general) {
    drift_general(t, z, r, zp, tmp);
    for (std::size_t i = 0; i < n; ++i) out[i] += tmp[i];
  }
}

Matrix CoefficientSpec::diffusion(double t, std::span<const double> x, double r,
                                  std::span<const double> zp) const {
  if (diffusion_general) return diffusion_general(t, x, r, zp);
  if (diffusion_local) return diffusion_local(t, x, r);
  if (diffusion_constant) return *diffusion_constant;
  throw ContractViolation("coefficient spec has no diffusion");
}

void CoefficientSpec::validate() const {
  if (d < 1 || d > 3) throw ContractViolation("coefficient spec needs d in {1, 2, 3}");
  if (!(kappa0 > 0.0) || !(kappa1 >= kappa0)) throw ContractViolation("need 0 < kappa0 <= kappa1");
  if (!diffusion_constant && !diffusion_local && !diffusion_general)
    throw ContractViolation("coefficient spec has no diffusion");
  if (diffusion_constant) {
    if (diffusion_constant->rows() != d || diffusion_constant->cols() != d)
      throw ContractViolation("constant diffusion must be d x d");
    if (!within_band(*diffusion_constant, kappa0, kappa1))
      throw EllipticityError("constant diffusion outside [kappa0, kappa1]");
  }
}

std::uint64_t CoefficientSpec::hash() const {
  std::ostringstream os;
  os << std::setprecision(17) << name << ';' << d << ';' << kappa0 << ';' << kappa1;
  for (const auto& [k, v] : params) os << ';' << k << '=' << v;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void reject_unknown(const std::map<std::string, double>& p, std::initializer_list<const char*> known,
                    const std::string& preset) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ContractViolation("preset '" + preset + "' has no parameter '" + k + "'");
  }
}

Matrix scaled_identity(int d, double a) { return a * Matrix::Identity(d, d); }

}  // namespace

std::vector<std::string> preset_names() {
  return {"constant-diffusion", "ornstein-uhlenbeck", "linear", "bounded-measurable", "convolutional",
          "landau-variant"};
}

CoefficientSpec make_preset(const std::string& name, int d, const std::map<std::string, double>& params) {
  if (d < 1 || d > 3) throw ContractViolation("presets need d in {1, 2, 3}");
  CoefficientSpec s;
  s.d = d;
  s.name = name;
  const auto n = static_cast<std::size_t>(d);

  if (name == "constant-diffusion") {
    reject_unknown(params, {"a0"}, name);
    const double a0 = param(params, "a0", 0.5);
    s.params = {{"a0", a0}};
    s.diffusion_constant = scaled_identity(d, a0);
    s.kappa0 = s.kappa1 = a0;
    s.drift_bound = 0.0;
  } else if (name == "ornstein-uhlenbeck") {
    reject_unknown(params, {"gamma", "a0"}, name);
    const double g = param(params, "gamma", 1.0), a0 = param(params, "a0", 1.0);
    s.params = {{"gamma", g}, {"a0", a0}};
    s.drift_local = [n, g](double, std::span<const double> z, double, std::span<double> out) {
      for (std::size_t i = 0; i < n; ++i) out[i] = -g * z[n + i];
    };
    s.diffusion_constant = scaled_identity(d, a0);
    s.kappa0 = s.kappa1 = a0;
  } else if (name == "linear") {
    reject_unknown(params, {"beta", "a0"}, name);
    const double b = param(params, "beta", 1.0), a0 = param(params, "a0", 0.5);
    s.params = {{"beta", b}, {"a0", a0}};
    s.drift_local = [n, b](double, std::span<const double> z, double, std::span<double> out) {
      for (std::size_t i = 0; i < n; ++i) out[i] = -b * std::tanh(z[n + i]);
    };
    s.diffusion_constant = scaled_identity(d, a0);
    s.kappa0 = s.kappa1 = a0;
    s.drift_bound = b * std::sqrt(static_cast<double>(d));
  } else if (name == "bounded-measurable") {
    reject_unknown(params, {"beta", "eta", "a_lo", "a_hi"}, name);
    const double b = param(params, "beta", 1.0), eta = param(params, "eta", 0.5);
    const double lo = param(params, "a_lo", 0.5), hi = param(params, "a_hi", 0.75);
    s.params = {{"beta", b}, {"eta", eta}, {"a_lo", lo}, {"a_hi", hi}};
    s.drift_local = [n, b, eta](double, std::span<const double> z, double r, std::span<double> out) {
      double vn = 0.0;
      for (std::size_t i = 0; i < n; ++i) vn += z[n + i] * z[n + i];
      vn = std::sqrt(vn);
      const double dens = eta * std::max(r, 0.0) / (1.0 + std::max(r, 0.0));
      for (std::size_t i = 0; i < n; ++i) out[i] = -b * std::tanh(z[n + i]) - dens * z[n + i] / (1.0 + vn);
    };
    s.diffusion_local = [d, lo, hi](double, std::span<const double> x, double) {
      return scaled_identity(d, std::sin(x[0]) >= 0.0 ? lo : hi);
    };
    s.kappa0 = std::min(lo, hi);
    s.kappa1 = std::max(lo, hi);
    s.density_lipschitz = eta;
    s.drift_bound = (b + eta) * std::sqrt(static_cast<double>(d));
    s.drift_uses_density = eta != 0.0;
  } else if (name == "convolutional") {
    reject_unknown(params, {"beta", "a0"}, name);
    const double b = param(params, "beta", 1.0), a0 = param(params, "a0", 0.5);
    s.params = {{"beta", b}, {"a0", a0}};
    s.drift_kernel = [n, b](double, std::span<const double> w, std::span<double> out) {
      for (std::size_t i = 0; i < n; ++i) out[i] = -b * std::tanh(w[n + i]);
    };
    s.diffusion_constant = scaled_identity(d, a0);
    s.kappa0 = s.kappa1 = a0;
    s.drift_bound = b * std::sqrt(static_cast<double>(d));
  } else if (name == "landau-variant") {
    reject_unknown(params, {"c", "gamma", "eps", "ell", "a0"}, name);
    const double c = param(params, "c", 1.0), g = param(params, "gamma", -1.0);
    const double eps = param(params, "eps", 0.5), ell = param(params, "ell", 0.5);
    const double a0 = param(params, "a0", 0.5);
    if (!(eps > 0.0) || !(ell > 0.0)) throw ContractViolation("landau-variant needs eps > 0 and ell > 0");
    if (g < -static_cast<double>(d)) throw ContractViolation("landau-variant needs gamma >= -d");
    s.params = {{"c", c}, {"gamma", g}, {"eps", eps}, {"ell", ell}, {"a0", a0}};
    const double expo = -(g + d + 2.0) / 2.0;
    const double pre = -c * (d - 1.0);
    s.drift_kernel = [n, pre, expo, eps, ell](double, std::span<const double> w, std::span<double> out) {
      std::vector<double> wx(n);
      double r2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        wx[i] = w[i] / ell;
        r2 += w[n + i] * w[n + i];
      }
      const double loc = bump(wx) / std::pow(ell, static_cast<double>(n));
      const double amp = pre * std::pow(r2 + eps * eps, expo) * loc;
      for (std::size_t i = 0; i < n; ++i) out[i] = amp * w[n + i];
    };
    s.diffusion_constant = scaled_identity(d, a0);
    s.kappa0 = s.kappa1 = a0;
  } else {
    throw ContractViolation("unknown coefficient preset '" + name + "'");
  }
  s.validate();
  return s;
}

}  // namespace kmv

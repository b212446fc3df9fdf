#include "kmv/kinetic_semigroup.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "kmv/errors.hpp"
#include "kmv/fft.hpp"

namespace kmv {

double KolmogorovGaussian::fourier_factor(double xi, double eta) const {
  return std::exp(-(t * t * t * xi * xi / 3.0 + t * t * xi * eta + t * eta * eta));
}

DuhamelSchedule::DuhamelSchedule(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2 || nodes_.front() != 0.0)
    throw ContractViolation("schedule needs nodes 0 = t_0 < .. < t_M");
  for (std::size_t m = 0; m + 1 < nodes_.size(); ++m) {
    if (!(nodes_[m + 1] > nodes_[m])) throw ContractViolation("schedule nodes must increase strictly");
    weights_.push_back(nodes_[m + 1] - nodes_[m]);
  }
}

DuhamelSchedule DuhamelSchedule::uniform(double T, std::size_t steps) {
  if (!(T > 0.0) || steps == 0) throw ContractViolation("uniform schedule needs T > 0 and steps > 0");
  std::vector<double> n(steps + 1);
  for (std::size_t m = 0; m <= steps; ++m) n[m] = T * static_cast<double>(m) / static_cast<double>(steps);
  n.back() = T;
  return DuhamelSchedule(std::move(n));
}

namespace {

std::size_t phase_dim(const SampledField& f) {
  if (f.ndim() % 2 != 0 || f.ndim() == 0) throw ContractViolation("phase-space field needs 2d axes");
  return f.ndim() / 2;
}

}  // namespace

SampledField semigroup_apply(const SampledField& f, double t) {
  if (!(t >= 0.0)) throw ContractViolation("semigroup_apply: t must be nonnegative");
  if (t == 0.0) return f;
  const std::size_t d = phase_dim(f);
  const auto& shape = f.shape();
  const std::size_t n = f.size();
  const KolmogorovGaussian law{t};

  auto c = to_complex(f.values());
  fft_forward(c, shape, all_axes(shape));

  std::vector<std::vector<double>> freq(2 * d);
  for (std::size_t a = 0; a < 2 * d; ++a) {
    freq[a].resize(shape[a]);
    for (std::size_t k = 0; k < shape[a]; ++k) freq[a][k] = angular_frequency(k, shape[a], f.extent(a));
  }
  std::vector<std::size_t> strides(2 * d);
  for (std::size_t a = 0; a < 2 * d; ++a) strides[a] = f.stride(a);

  for (std::size_t flat = 0; flat < n; ++flat) {
    double factor = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = freq[i][(flat / strides[i]) % shape[i]];
      const double eta = freq[d + i][(flat / strides[d + i]) % shape[d + i]];
      factor *= law.fourier_factor(xi, eta);
    }
    c[flat] *= factor;
  }

  // Back to v space, keep x in Fourier space, and shear: h(x, v) = g(x + t v, v).
  std::vector<std::size_t> v_axes, x_axes;
  for (std::size_t i = 0; i < d; ++i) {
    x_axes.push_back(i);
    v_axes.push_back(d + i);
  }
  fft_inverse(c, shape, v_axes);
  for (std::size_t flat = 0; flat < n; ++flat) {
    double phase = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = freq[i][(flat / strides[i]) % shape[i]];
      const double v = f.coordinate(d + i, (flat / strides[d + i]) % shape[d + i]);
      phase += xi * t * v;
    }
    c[flat] *= Complex(std::cos(phase), std::sin(phase));
  }
  fft_inverse(c, shape, x_axes);

  SampledField out(shape, f.spacing(), f.origin(), real_part(c));
  out.set_axes(f.axes());
  return out;
}

namespace {

struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Golub-Welsch for the standard normal weight (probabilists' Hermite).
GaussHermite gauss_hermite(int order) {
  if (order < 1 || order > 64) throw ContractViolation("Gauss-Hermite order must lie in [1, 64]");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) J(k - 1, k) = J(k, k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermite gh;
  for (int k = 0; k < order; ++k) {
    gh.nodes.push_back(es.eigenvalues()(k));
    const double v0 = es.eigenvectors()(0, k);
    gh.weights.push_back(v0 * v0);
  }
  return gh;
}

}  // namespace

double semigroup_apply_pointwise(const PhaseFunction& f, std::span<const double> z, double t,
                                 int order) {
  if (!(t >= 0.0)) throw ContractViolation("semigroup_apply_pointwise: t must be nonnegative");
  if (z.size() % 2 != 0 || z.empty()) throw ContractViolation("point must be (x, v) with 2d entries");
  if (t == 0.0) return f(z);
  const std::size_t d = z.size() / 2;
  const auto gh = gauss_hermite(order);
  // eta = sqrt(2t) g1, xi = t^2 / sqrt(2t) g1 + sqrt(t^3 / 6) g2 reproduce the covariance.
  const double c_eta = std::sqrt(2.0 * t), c_xi1 = t * t / c_eta, c_xi2 = std::sqrt(t * t * t / 6.0);
  const std::size_t dims = 2 * d;
  std::vector<std::size_t> idx(dims, 0);
  std::vector<double> p(dims);
  double acc = 0.0;
  for (;;) {
    double w = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double g1 = gh.nodes[idx[2 * i]], g2 = gh.nodes[idx[2 * i + 1]];
      w *= gh.weights[idx[2 * i]] * gh.weights[idx[2 * i + 1]];
      p[i] = z[i] + t * z[d + i] + c_xi1 * g1 + c_xi2 * g2;
      p[d + i] = z[d + i] + c_eta * g1;
    }
    acc += w * f(p);
    std::size_t a = dims;
    while (a > 0) {
      --a;
      if (++idx[a] < static_cast<std::size_t>(order)) break;
      idx[a] = 0;
      if (a == 0) return acc;
    }
  }
}

std::vector<SampledField> duhamel_solve(const std::function<SampledField(double)>& source,
                                        const DuhamelSchedule& schedule) {
  const auto& t = schedule.nodes();
  const auto& w = schedule.weights();
  std::vector<SampledField> f(t.size() - 1);
  for (std::size_t m = 0; m + 1 < t.size(); ++m) f[m] = source(t[m]);
  std::vector<SampledField> u(t.size());
  const auto nodes = static_cast<long>(t.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < nodes; ++k) {
    SampledField acc(f[0].shape(), f[0].spacing(), f[0].origin());
    acc.set_axes(f[0].axes());
    for (long m = 0; m < k; ++m) {
      const auto pf = semigroup_apply(f[static_cast<std::size_t>(m)], t[static_cast<std::size_t>(k)] - t[static_cast<std::size_t>(m)]);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w[static_cast<std::size_t>(m)] * pf[i];
    }
    u[static_cast<std::size_t>(k)] = std::move(acc);
  }
  return u;
}

std::vector<double> duhamel_solve_pointwise(const SpaceTimeFunction& source,
                                            std::span<const double> z,
                                            const DuhamelSchedule& schedule, int order) {
  const auto& t = schedule.nodes();
  const auto& w = schedule.weights();
  std::vector<double> u(t.size(), 0.0);
  for (std::size_t k = 1; k < t.size(); ++k) {
    for (std::size_t m = 0; m < k; ++m) {
      const double sm = t[m];
      const PhaseFunction fm = [&](std::span<const double> y) { return source(sm, y); };
      u[k] += w[m] * semigroup_apply_pointwise(fm, z, t[k] - t[m], order);
    }
  }
  return u;
}

SmoothingFit smoothing_exponent_fit(const std::vector<SampledField>& family, double beta,
                                    double gamma, const MultiIndex& p,
                                    const DyadicPartition& part, const std::vector<double>& times) {
  if (times.size() < 4) throw ContractViolation("smoothing fit needs at least 4 time samples");
  if (family.empty()) throw ContractViolation("smoothing fit needs a non-empty family");
  if (!(beta >= gamma)) throw ContractViolation("smoothing fit needs beta >= gamma");
  SmoothingFit fit;
  fit.theoretical = -(beta - gamma) / 2.0;
  fit.times = times;
  std::vector<double> base(family.size());
  for (std::size_t i = 0; i < family.size(); ++i) base[i] = besov_norm(family[i], gamma, p, part).norm;
  for (double t : times) {
    if (!(t > 0.0)) throw ContractViolation("smoothing fit needs positive times");
    double best = 0.0;
    for (std::size_t i = 0; i < family.size(); ++i) {
      if (base[i] == 0.0) continue;
      best = std::max(best, besov_norm(semigroup_apply(family[i], t), beta, p, part).norm / base[i]);
    }
    if (!(best > 0.0)) throw NumericalError("smoothing fit: ratio vanished");
    fit.ratios.push_back(best);
  }
  double mx = 0, my = 0;
  const double n = static_cast<double>(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    mx += std::log(times[i]) / n;
    my += std::log(fit.ratios[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double dx = std::log(times[i]) - mx;
    sxy += dx * (std::log(fit.ratios[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw ContractViolation("smoothing fit needs distinct times");
  fit.slope = sxy / sxx;
  return fit;
}

std::vector<SampledField> ring_family(int d, int j_top, std::size_t n) {
  if (d < 1 || j_top < 0) throw ContractViolation("ring_family needs d >= 1 and j_top >= 0");
  const auto nd = 2 * static_cast<std::size_t>(d);
  const double two_pi = 2.0 * 3.14159265358979323846;
  std::vector<SampledField> out;
  for (int j = 0; j <= j_top; ++j) {
    SampledField f(std::vector<std::size_t>(nd, n), std::vector<double>(nd, two_pi / static_cast<double>(n)),
                   std::vector<double>(nd, 0.0));
    const double k = std::ldexp(1.0, j);
    f.fill([&](std::span<const double> z) { return std::cos(k * z[static_cast<std::size_t>(d)]); });
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace kmv

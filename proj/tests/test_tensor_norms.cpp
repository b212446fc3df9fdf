#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "kmv/errors.hpp"
#include "kmv/field_io.hpp"
#include "kmv/tensor_norms.hpp"

using namespace kmv;

namespace {

SampledField box_field(std::vector<std::size_t> n, std::vector<double> lo, std::vector<double> hi) {
  std::vector<double> h(n.size());
  for (std::size_t a = 0; a < n.size(); ++a) h[a] = (hi[a] - lo[a]) / static_cast<double>(n[a]);
  return SampledField(std::move(n), std::move(h), std::move(lo));
}

SampledField random_field(std::mt19937_64& gen, std::vector<std::size_t> n) {
  auto f = box_field(n, std::vector<double>(n.size(), 0.0), std::vector<double>(n.size(), 1.0));
  std::normal_distribution<double> g;
  for (auto& v : f.values()) v = g(gen);
  return f;
}

// Composite Simpson rule for the 1-d integral of exp(-x^2) on [-12, 12].
double simpson_gauss_integral() {
  const int n = 20000;
  const double a = -12.0, b = 12.0, h = (b - a) / n;
  double s = std::exp(-a * a) + std::exp(-b * b);
  for (int i = 1; i < n; ++i) {
    const double x = a + i * h;
    s += (i % 2 ? 4.0 : 2.0) * std::exp(-x * x);
  }
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("anisotropy and multi-index basics") {
  const auto a = AnisotropyVector::kinetic(2);
  CHECK(a.size() == 4);
  CHECK(a[0] == 3.0);
  CHECK(a[3] == 1.0);
  CHECK(a.total() == doctest::Approx(8.0));
  CHECK_THROWS_AS(AnisotropyVector({0.5, 1.0}), ContractViolation);

  MultiIndex p({2.0, kInf});
  const auto r = p.reciprocal();
  CHECK(r[0] == 0.5);
  CHECK(r[1] == 0.0);
  CHECK(MultiIndex({1.0, 2.0}) <= MultiIndex({1.0, 3.0}));
  CHECK_FALSE(MultiIndex({1.0, 2.0}) < MultiIndex({1.0, 3.0}));
  CHECK(MultiIndex({1.0, 2.0}) < MultiIndex({1.5, 3.0}));
  CHECK_THROWS_AS(MultiIndex({0.0}), ContractViolation);
  CHECK(MultiIndex({2.0, 2.0}).weighted_reciprocal(AnisotropyVector({3.0, 1.0})) == doctest::Approx(2.0));
}

TEST_CASE("aniso_distance worked values") {
  const AnisotropyVector a({3.0, 1.0});
  const std::vector<double> z{8.0, 2.0}, o{0.0, 0.0}, one{1.0, 1.0};
  CHECK(aniso_distance(z, o, a) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(aniso_distance(one, o, a) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(aniso_distance(z, z, a) == 0.0);
  CHECK(aniso_distance(z, one, a) == doctest::Approx(aniso_distance(one, z, a)));
  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(aniso_distance(bad, o, a), ContractViolation);
}

TEST_CASE("aniso_distance scaling property") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0), lam(0.1, 5.0);
  const auto a = AnisotropyVector::kinetic(2);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> z(4), zero(4, 0.0), sz(4);
    for (auto& c : z) c = u(gen);
    const double l = lam(gen);
    for (std::size_t i = 0; i < 4; ++i) sz[i] = std::pow(l, a[i]) * z[i];
    CHECK(aniso_distance(sz, zero, a) == doctest::Approx(l * aniso_distance(z, zero, a)).epsilon(1e-12));
  }
}

TEST_CASE("mixed norms of indicators") {
  auto unit = box_field({16, 16}, {0.0, 0.0}, {1.0, 1.0});
  unit.fill([](auto) { return 1.0; });
  CHECK(mixed_lp_norm(unit, MultiIndex({2.0, 4.0})) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mixed_lp_norm(unit, MultiIndex({kInf, 3.0})) == doctest::Approx(1.0).epsilon(1e-14));

  auto rect = box_field({16, 32}, {0.0, 0.0}, {1.0, 2.0});
  rect.fill([](auto) { return 1.0; });
  CHECK(mixed_lp_norm(rect, MultiIndex({1.0, 2.0})) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  // Swapping exponents changes the value: the last axis is innermost.
  CHECK(mixed_lp_norm(rect, MultiIndex({2.0, 1.0})) == doctest::Approx(2.0).epsilon(1e-14));

  auto bad = unit;
  bad[3] = std::nan("");
  CHECK_THROWS_AS(mixed_lp_norm(bad, MultiIndex({2.0, 2.0})), ContractViolation);
}

TEST_CASE("Gaussian L2 norm against a quadrature oracle") {
  const double oracle = simpson_gauss_integral();  // (∫ e^{-|z|^2})^{1/2} = oracle^{2/2}
  auto g = box_field({256, 256}, {-10.0, -10.0}, {10.0, 10.0});
  g.fill([](std::span<const double> z) { return std::exp(-0.5 * (z[0] * z[0] + z[1] * z[1])); });
  CHECK(mixed_lp_norm(g, MultiIndex({2.0, 2.0})) == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(oracle == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-10));
}

TEST_CASE("triangle, Hoelder and Young inequalities on random fields") {
  std::mt19937_64 gen(11);
  const std::vector<MultiIndex> ps{MultiIndex({1.0, 1.0}), MultiIndex({2.0, 3.0}),
                                   MultiIndex({kInf, 1.5}), MultiIndex({1.2, kInf})};
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_field(gen, {12, 9});
    const auto g = random_field(gen, {12, 9});
    auto s = f;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
    for (const auto& p : ps) {
      const double lhs = mixed_lp_norm(s, p);
      const double rhs = mixed_lp_norm(f, p) + mixed_lp_norm(g, p);
      CHECK(lhs <= rhs * (1.0 + 1e-12));
    }
    // Hoelder with 1/p + 1/r = 1/q entry-wise.
    const MultiIndex p({3.0, 4.0}), r({6.0, 4.0}), q({2.0, 2.0});
    auto fg = f;
    for (std::size_t i = 0; i < fg.size(); ++i) fg[i] *= g[i];
    CHECK(mixed_lp_norm(fg, q) <= mixed_lp_norm(f, p) * mixed_lp_norm(g, r) * (1.0 + 1e-12));
  }
  // Young on a 1-d grid with the scaled discrete convolution.
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 40;
    const double h = 0.05;
    std::normal_distribution<double> nd;
    SampledField f({n}, {h}, {0.0}), g({n}, {h}, {0.0}), c({2 * n - 1}, {h}, {0.0});
    for (auto& v : f.values()) v = nd(gen);
    for (auto& v : g.values()) v = nd(gen);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i + j] += f[i] * g[j] * h;
    const double p = 1.5, r = 1.2, q = 1.0 / (1.0 / p + 1.0 / r - 1.0);
    CHECK(mixed_lp_norm(c, MultiIndex({q})) <=
          mixed_lp_norm(f, MultiIndex({p})) * mixed_lp_norm(g, MultiIndex({r})) * (1.0 + 1e-12));
  }
}

TEST_CASE("kinetic cylinder membership") {
  KineticCylinder q{0.0, {0.0}, {0.0}, 2.0};
  const std::vector<double> x_in{7.9}, x_out{8.0}, v_in{1.9}, v_out{2.0};
  CHECK(q.contains(3.9, x_in, v_in));
  CHECK_FALSE(q.contains(4.0, x_in, v_in));
  CHECK_FALSE(q.contains(0.0, x_out, v_in));
  CHECK_FALSE(q.contains(0.0, x_in, v_out));
}

namespace {

// (t, x, v) grid whose cylinder half-widths for r = 1 and r = 2 are whole cell counts.
SampledField cylinder_grid() {
  return make_kinetic_field(1, 40, 72, 24, -5.0, 5.0, -9.0, 9.0, -3.0, 3.0);
}

}  // namespace

TEST_CASE("localized norm of constants is the cylinder volume factor") {
  auto f = cylinder_grid();
  const double c = 2.5;
  f.fill([&](auto) { return c; });
  for (double q : {1.0, 2.0, 3.0}) {
    for (double p : {1.0, 2.0, kInf}) {
      const MultiIndex pp({p, p});
      const auto res = localized_norm(f, q, pp, 1.0);
      const double pf = std::isinf(p) ? 1.0 : std::pow(2.0, 2.0 / p);
      CHECK_FALSE(res.empty_overlap);
      CHECK(res.value == doctest::Approx(c * std::pow(2.0, 1.0 / q) * pf).epsilon(1e-12));
    }
  }
  const auto ratio = equivalence_ratio_across_radii(f, 1.0, MultiIndex({1.0, 1.0}), 1.0, 2.0);
  CHECK_FALSE(ratio.degenerate);
  CHECK(ratio.ratio == doctest::Approx(8.0 / 512.0).epsilon(1e-12));
  CHECK(equivalence_ratio_across_radii(f, 2.0, MultiIndex({2.0, 3.0}), 1.0, 1.0).ratio == 1.0);
}

TEST_CASE("localized norm of zero and of an aligned cylinder indicator") {
  auto f = cylinder_grid();
  const auto z = localized_norm(f, 2.0, MultiIndex({2.0, 2.0}), 1.0);
  CHECK(z.value == 0.0);
  CHECK(equivalence_ratio_across_radii(f, 2.0, MultiIndex({2.0, 2.0}), 1.0, 2.0).degenerate);

  const KineticCylinder cyl{0.0, {0.0}, {0.0}, 1.0};
  f.fill([&](std::span<const double> p) {
    const std::vector<double> x{p[1]}, v{p[2]};
    return cyl.contains(p[0], x, v) ? 1.0 : 0.0;
  });
  const MultiIndex p({3.0, 1.5});
  // Brute-force oracle: every probed center sees at most the whole indicator.
  const double full = mixed_lp_norm(f, MultiIndex({2.0, 3.0, 1.5}));
  CHECK(localized_norm(f, 2.0, p, 1.0).value == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("localized norm properties on a smooth corpus") {
  auto f = cylinder_grid();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> c(-2.0, 2.0), w(0.3, 1.5);
  double worst = 1.0;
  for (int k = 0; k < 10; ++k) {
    const double t0 = c(gen), x0 = 2 * c(gen), v0 = c(gen), s = w(gen);
    f.fill([&](std::span<const double> z) {
      const double dt = z[0] - t0, dx = (z[1] - x0) / 3.0, dv = z[2] - v0;
      return std::exp(-(dt * dt + dx * dx + dv * dv) / (2 * s * s));
    });
    const MultiIndex p({2.0, 2.0});
    const double r1 = localized_norm(f, 2.0, p, 0.75).value;
    const double r2 = localized_norm(f, 2.0, p, 1.0).value;
    const double r3 = localized_norm(f, 2.0, p, 1.5).value;
    CHECK(r1 <= r2 * (1 + 1e-12));
    CHECK(r2 <= r3 * (1 + 1e-12));
    CHECK(r3 <= mixed_lp_norm(f, MultiIndex({2.0, 2.0, 2.0})) * (1 + 1e-12));
    const auto rr = equivalence_ratio_across_radii(f, 2.0, p, 1.0, 2.0);
    worst = std::max({worst, rr.ratio, 1.0 / rr.ratio});
  }
  // Recorded corpus constant for radii (1, 2) on this grid.
  CHECK(worst <= 40.0);
}

TEST_CASE("field binary round trip and CSV") {
  auto f = box_field({3, 4}, {-1.0, 0.5}, {2.0, 1.5});
  f.fill([](std::span<const double> z) { return z[0] * 10 + z[1]; });
  std::stringstream ss;
  write_field(ss, f);
  const auto g = read_field(ss);
  CHECK(g.same_grid(f));
  CHECK(g.values() == f.values());

  std::stringstream bad("KMKX");
  CHECK_THROWS_AS(read_field(bad), ContractViolation);

  std::ostringstream csv;
  write_field_csv(csv, f);
  const auto text = csv.str();
  CHECK(text.rfind("z0,z1,value\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 13);
}

#include <cmath>
#include <random>

#include "doctest.h"
#include "kmv/coefficients.hpp"
#include "kmv/degiorgi_diag.hpp"
#include "kmv/errors.hpp"
#include "oracles.hpp"

using namespace kmv;

namespace {

// Solver output on t in [0.5, 2.5] stacked into a (t, x, v) field.
SampledField solver_field(const CoefficientSpec& spec, std::size_t n, double a_init) {
  auto g = make_phase_grid(1, n, n, 3.0, 3.0);
  testing::fill_kolmogorov(g, a_init, 0.5);
  std::vector<double> outs;
  for (int k = 1; k < 20; ++k) outs.push_back(0.5 + 0.1 * k);
  const auto tr = fpk_solve(g, spec, 2.5, 0.5 * cfl_limit(g, spec), outs);
  return stack_snapshots(tr.snapshots);
}

CylinderFamily centered(double t0, double scale) {
  return {t0, {0.0}, {0.0}, scale};
}

IndexFamily default_family() {
  return {{MultiIndex::uniform(3, 2.0), MultiIndex::uniform(3, 4.0), MultiIndex::uniform(3, 1.5)}, 2};
}

}  // namespace

TEST_CASE("extremal recursion at the threshold") {
  CHECK(iteration_threshold(2, 2, 1) == 0.125);
  const auto r = iterate_to_zero(0.125, 2, 2, 1);
  CHECK(r.below_threshold);
  CHECK(r.verdict == IterationVerdict::ToZero);
  // a_{n+1} = 2^{n+1} a_n^2 from a_1 = 2^-3 gives a_n = 2^{-(n+2)}.
  for (std::size_t n = 1; n <= 60; ++n) CHECK(r.sequence[n - 1] == std::ldexp(1.0, -static_cast<int>(n + 2)));
  CHECK(r.sequence.back() < 1e-8);

  const auto z = iterate_to_zero(0.0, 2, 2, 1);
  CHECK(z.verdict == IterationVerdict::ToZero);
  for (double a : z.sequence) CHECK(a == 0.0);

  const auto d = iterate_to_zero(1.0, 2, 2, 1);
  CHECK(d.verdict == IterationVerdict::Diverges);
  CHECK_FALSE(d.below_threshold);
  CHECK(to_string(d.verdict) == "diverges");

  CHECK_THROWS_AS(iterate_to_zero(0.1, 1.0, 2, 1), PreconditionError);
  CHECK_THROWS_AS(iterate_to_zero(0.1, 2, 2, 0), PreconditionError);
}

TEST_CASE("below the threshold the recursion always vanishes") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> uC(1.1, 8.0), uL(1.5, 6.0), uD(0.3, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double C0 = uC(gen), lam = uL(gen), del = uD(gen);
    const double th = iteration_threshold(C0, lam, del);
    // Direct evaluation of the threshold formula.
    CHECK(th == doctest::Approx(std::pow(C0, -1.0 / del) * std::pow(lam, -(1.0 + del) / (del * del))).epsilon(1e-12));
    for (double f : {0.999999, 0.5, 0.01}) CHECK(iterate_to_zero(f * th, C0, lam, del).verdict == IterationVerdict::ToZero);
  }
}

TEST_CASE("verdict is monotone in a_1") {
  for (auto [C0, lam, del] : {std::tuple{2.0, 2.0, 1.0}, std::tuple{3.0, 1.5, 0.5}, std::tuple{1.2, 4.0, 2.0}}) {
    bool seen_nonzero = false;
    for (int k = 0; k <= 200; ++k) {
      const double a1 = 0.02 * k * iteration_threshold(C0, lam, del);
      const bool zero = iterate_to_zero(a1, C0, lam, del).verdict == IterationVerdict::ToZero;
      if (!zero) seen_nonzero = true;
      CHECK_FALSE((zero && seen_nonzero));
    }
    CHECK(seen_nonzero);
  }
}

TEST_CASE("iteration sequences from data are checked term by term") {
  CHECK_NOTHROW(IterationSequence({0.1, 0.02, 0.001}, 2, 2, 1));
  try {
    IterationSequence({0.1, 0.02, 0.01}, 2, 2, 1);
    FAIL("expected a violation");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("a_3") != std::string::npos);
  }
  CHECK_THROWS_AS(IterationSequence({0.1, -1.0}, 2, 2, 1), PreconditionError);
}

TEST_CASE("absorption lemma") {
  std::vector<double> taus;
  for (int k = 0; k <= 16; ++k) taus.push_back(1.0 + k / 16.0);

  SUBCASE("constant profile with A = 0") {
    const SampledProfile h{taus, std::vector<double>(taus.size(), 0.3)};
    CHECK(absorb_lemma_check(h, 0.5, 2.0, 0.0, 0.3) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("singular profile sampled below the endpoint") {
    const double tau2 = 2.0, A = 0.7, alpha = 2.0;
    std::vector<double> t(taus.begin(), taus.end() - 1), v;
    for (double s : t) v.push_back(std::pow(tau2 - s, -alpha) * A);
    const double r = absorb_lemma_check({t, v}, 0.5, alpha, A, 0.0);
    CHECK(r == doctest::Approx(std::pow((t.back() - t.front()) / (tau2 - t.front()), alpha)).epsilon(1e-12));
  }
  SUBCASE("violations are reported with the pair") {
    std::vector<double> v(taus.size(), 0.0);
    v[3] = 1.0;
    try {
      absorb_lemma_check({taus, v}, 0.5, 1.0, 0.1, 0.1);
      FAIL("expected a violation");
    } catch (const PreconditionError& e) {
      CHECK(std::string(e.what()).find("tau = 1.1875") != std::string::npos);
    }
  }
  SUBCASE("synthetic family stays under the absorption constant") {
    const double theta = 0.5, alpha = 2.0;
    const double C = absorption_constant(alpha, theta);
    CHECK(absorption_constant(0.0, theta) == doctest::Approx(2.0));
    CHECK(C >= 1.0 / (1.0 - theta));
    double worst = 0.0;
    int probed = 0;
    for (double beta : {0.1, 0.5, 1.0})
      for (double gamma : {0.0, 1.0, 2.0})
        for (double s : {1e-3, 0.1, 1.0})
          for (double A : {0.01, 1.0, 10.0})
            for (double B : {0.0, 0.5, 3.0}) {
              std::vector<double> v;
              for (double t : taus) v.push_back(beta * A * std::pow(2.0 + s - t, -alpha) + gamma * B);
              worst = std::max(worst, absorb_lemma_check({taus, v}, theta, alpha, A, B));
              ++probed;
            }
    CHECK(probed == 243);
    CHECK(worst <= C);
    CHECK(worst >= 1.0);
  }
}

TEST_CASE("truncation energies along the dyadic ladder") {
  const auto u = solver_field(make_preset("constant-diffusion", 1), 48, 0.5);
  const auto Q = centered(1.5, 0.5);
  const std::vector<MultiIndex> norms{MultiIndex::uniform(3, 2.0), MultiIndex({1.5, 3.0, 2.0})};
  const auto e = TruncationEnergy::compute(u, Q, 0.2, 1.0, 2.0, 8, norms);
  REQUIRE(e.kappas.size() == 8);
  CHECK(e.kappas[0] == 0.0);
  CHECK(e.radii[0] == 2.0);
  for (std::size_t n = 1; n < 8; ++n) {
    CHECK(e.kappas[n] > e.kappas[n - 1]);
    CHECK(e.radii[n] < e.radii[n - 1]);
    for (const auto& row : e.energies) CHECK(row[n] <= row[n - 1]);
  }
  CHECK(e.energies[0][0] > 0.0);
}

TEST_CASE("certificates on sampled fields") {
  const auto u = solver_field(make_preset("constant-diffusion", 1), 48, 0.5);
  const auto Q = centered(1.5, 0.5);
  CertificateOptions opt;
  opt.family = default_family();
  opt.lambda = 2.0;
  opt.A = 1.0;

  SUBCASE("u below every kappa gives zero constants") {
    double mx = 0;
    for (double x : u.values()) mx = std::max(mx, x);
    auto o = opt;
    o.kappas = {mx, 2 * mx};
    const auto c = fit_certificate(u, Q, o);
    for (double x : c.constants) CHECK(x == 0.0);
    CHECK(c.finite());
  }
  SUBCASE("solver output gives a finite certificate") {
    const auto c = fit_certificate(u, Q, opt);
    CHECK(c.finite());
    CHECK(c.probes == 36 * 8);
    CHECK(c.constants.size() == 3);
    for (double x : c.constants) CHECK(x > 0.0);
    const auto j = c.to_json();
    for (const char* key : {"indices", "lambda", "A", "constants", "lattice"}) CHECK(j.contains(key));
    CHECK(j["lattice"]["tau"].size() == 9);
  }
  SUBCASE("shifting u and the kappa lattice together") {
    auto o = opt;
    o.kappas = kappa_ladder(u, Q, 6);
    const auto c0 = fit_certificate(u, Q, o);
    auto shifted = u;
    const double c = 0.05;
    for (double& x : shifted.values()) x += c;
    for (double& k : o.kappas) k += c;
    const auto c1 = fit_certificate(shifted, Q, o);
    for (std::size_t i = 0; i < c0.constants.size(); ++i)
      CHECK(c1.constants[i] == doctest::Approx(c0.constants[i]).epsilon(1e-9));
  }
  SUBCASE("coarse grids are refused") {
    auto coarse = make_kinetic_field(1, 4, 4, 4, 0.5, 2.5, -3.0, 3.0, -3.0, 3.0);
    coarse.fill([](std::span<const double> z) { return std::exp(-z[1] * z[1] - z[2] * z[2]); });
    CHECK_THROWS_AS(fit_certificate(coarse, centered(1.5, 0.5), opt), ContractViolation);
  }
  SUBCASE("regions smaller than Q_2 are refused") {
    CHECK_THROWS_AS(fit_certificate(u, centered(1.5, 0.6), opt), ContractViolation);
  }
  SUBCASE("index family constraints") {
    auto o = opt;
    o.family.split = 3;
    CHECK_THROWS_AS(fit_certificate(u, Q, o), ContractViolation);
    o.family = {{MultiIndex::uniform(3, 1.0), MultiIndex::uniform(3, 2.0)}, 1};
    CHECK_THROWS_AS(fit_certificate(u, Q, o), ContractViolation);
  }
}

TEST_CASE("local sup bounds") {
  const auto Q = centered(1.5, 0.5);
  CertificateOptions opt;
  opt.family = default_family();
  opt.lambda = 2.0;
  opt.A = 0.1;

  SUBCASE("zero field is degenerate") {
    auto z = make_kinetic_field(1, 20, 48, 48, 0.5, 2.5, -3.0, 3.0, -3.0, 3.0);
    auto o = opt;
    o.A = 0.0;
    const auto c = fit_certificate(z, Q, o);
    const auto r = local_bound_check(z, c, Q, 2.0, 1.0, 2.0);
    CHECK(r.degenerate);
    CHECK(r.ratio == 0.0);
  }
  SUBCASE("ratio is scale covariant") {
    const auto u = solver_field(make_preset("constant-diffusion", 1), 48, 0.5);
    const auto c = fit_certificate(u, Q, opt);
    auto u3 = u;
    for (double& x : u3.values()) x *= 3.0;
    auto c3 = c;
    c3.A *= 3.0;
    for (double p : {1.0, 2.0, 0.5}) {
      const auto a = local_bound_check(u, c, Q, p, 1.0, 1.5);
      const auto b = local_bound_check(u3, c3, Q, p, 1.0, 1.5);
      CHECK(b.ratio == doctest::Approx(a.ratio).epsilon(1e-12));
      CHECK(a.ratio > 0.0);
    }
  }
  SUBCASE("stable under grid refinement") {
    const auto spec = make_preset("constant-diffusion", 1);
    const auto coarse = solver_field(spec, 48, 0.5), fine = solver_field(spec, 96, 0.5);
    const auto rc = local_bound_check(coarse, fit_certificate(coarse, Q, opt), Q, 2.0, 1.0, 2.0);
    const auto rf = local_bound_check(fine, fit_certificate(fine, Q, opt), Q, 2.0, 1.0, 2.0);
    CHECK(std::isfinite(rc.ratio));
    CHECK(rf.ratio == doctest::Approx(rc.ratio).epsilon(0.25));
  }
  SUBCASE("one constant across a suite of solver outputs") {
    struct Case {
      std::string preset;
      std::map<std::string, double> params;
      double a_init;
    };
    const std::vector<Case> suite{{"constant-diffusion", {{"a0", 0.3}}, 0.5}, {"constant-diffusion", {{"a0", 0.9}}, 0.5},
                                  {"constant-diffusion", {}, 0.25},        {"ornstein-uhlenbeck", {}, 0.5},
                                  {"ornstein-uhlenbeck", {{"gamma", 2.0}}, 0.3}, {"linear", {}, 0.5},
                                  {"linear", {{"beta", 2.0}}, 0.4},       {"bounded-measurable", {}, 0.5},
                                  {"convolutional", {}, 0.5},             {"landau-variant", {}, 0.5}};
    double sup = 0.0;
    for (const auto& s : suite) {
      const auto u = solver_field(make_preset(s.preset, 1, s.params), 48, s.a_init);
      const auto r = local_bound_check(u, fit_certificate(u, Q, opt), Q, 2.0, 1.0, 2.0);
      CHECK_FALSE(r.inconsistent);
      sup = std::max(sup, r.ratio);
    }
    MESSAGE("sup of local bound ratios over the suite: " << sup);
    CHECK(sup > 0.0);
    CHECK(sup < 10.0);
  }
}

TEST_CASE("stacking snapshots") {
  auto g = make_phase_grid(1, 8, 8, 1.0, 1.0);
  std::vector<GridDensity> s(3, g);
  for (int k = 0; k < 3; ++k) {
    s[k].t = 0.1 * k;
    s[k].rho.values().assign(64, k + 1.0);
  }
  const auto f = stack_snapshots(s);
  CHECK(f.shape() == std::vector<std::size_t>{3, 8, 8});
  CHECK(f.coordinate(0, 2) == doctest::Approx(0.2));
  CHECK(f[2 * 64 + 5] == 3.0);
  CHECK(f.axes()[0] == AxisKind::Time);
  s[2].t = 0.25;
  CHECK_THROWS_AS(stack_snapshots(s), ContractViolation);
}

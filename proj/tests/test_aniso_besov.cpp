#include <cmath>
#include <random>

#include "corpus.hpp"
#include "doctest.h"
#include "kmv/aniso_besov.hpp"
#include "kmv/errors.hpp"

using namespace kmv;
using kmv::testing::oracle_phi;
using kmv::testing::oracle_psi;

namespace {

constexpr double kPi = 3.14159265358979323846;

// [-pi, pi)^2 so that grid wavenumbers are integers.
SampledField torus(std::size_t n = 64) {
  return SampledField({n, n}, {2 * kPi / n, 2 * kPi / n}, {-kPi, -kPi});
}

SampledField mode(int kx, int kv, double phase = 0.3) {
  auto f = torus();
  f.fill([&](std::span<const double> z) { return std::cos(kx * z[0] + kv * z[1] + phase); });
  return f;
}

double max_abs_diff(const SampledField& a, const SampledField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

const AnisotropyVector kKin = AnisotropyVector::kinetic(1);

}  // namespace

TEST_CASE("partition profile matches the oracle and telescopes") {
  for (double s = 0.0; s < 300.0; s += 0.37) {
    CHECK(DyadicPartition::psi(s) == doctest::Approx(oracle_psi(s)).epsilon(1e-14));
    for (int j = 0; j <= 8; ++j) {
      CHECK(DyadicPartition::phi(j, s) == doctest::Approx(oracle_phi(j, s)).epsilon(1e-12));
      if (j >= 1 && (s < std::ldexp(1.0, j - 1) || s > std::ldexp(1.0, j + 1)))
        CHECK(DyadicPartition::phi(j, s) == 0.0);
    }
  }
  const auto f = torus();
  const auto part = DyadicPartition::for_grid(f, kKin);
  const auto s = symbol_norms(f, kKin);
  double worst = 0.0;
  for (double x : s) {
    double sum = 0.0;
    for (int j = 0; j <= part.j_max(); ++j) sum += DyadicPartition::phi(j, x);
    worst = std::max(worst, std::abs(sum - DyadicPartition::psi(std::ldexp(x, -part.j_max()))));
    CHECK(part.tail(x) == 0.0);
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("j_max rules") {
  const auto f = torus();
  // Max |k|_a on the 64-torus: 32^{1/3} + 32 < 2^6.
  CHECK(DyadicPartition::for_grid(f, kKin).j_max() == 6);
  // Resolvable ring: min over axes of 32^{1/a} = 32^{1/3} ~ 3.17 -> J = 0.
  CHECK(DyadicPartition::for_grid(f, kKin, JmaxRule::ResolvedRing).j_max() == 0);
  CHECK(DyadicPartition::for_grid(f, AnisotropyVector::isotropic(2), JmaxRule::ResolvedRing).j_max() == 4);
}

TEST_CASE("blocks of constants and of single modes") {
  auto c = torus();
  c.fill([](auto) { return 3.0; });
  const auto part = DyadicPartition::for_grid(c, kKin);
  CHECK(max_abs_diff(block(c, 0, part), c) < 1e-12);
  for (int j = 1; j <= part.j_max(); ++j) {
    const auto b = block(c, j, part);
    CHECK(mixed_lp_norm(b, MultiIndex({kInf, kInf})) < 1e-12);
  }
  CHECK_THROWS_AS(block(c, part.j_max() + 1, part), ContractViolation);
  CHECK_THROWS_AS(block(c, -1, part), ContractViolation);

  // |k|_a = 2^j exactly: the whole mode sits in ring j.
  const int ks[][3] = {{1, 3, 2}, {8, 6, 3}, {27, 13, 4}};
  for (const auto& k : ks) {
    const auto f = mode(k[0], k[1]);
    for (int j = 0; j <= part.j_max(); ++j) {
      const auto b = block(f, j, part);
      if (j == k[2])
        CHECK(max_abs_diff(b, f) < 1e-10);
      else
        CHECK(mixed_lp_norm(b, MultiIndex({kInf, kInf})) < 1e-10);
    }
  }
  // Off-center modes: every block is phi_j(|k|_a) times the mode.
  for (int kx : {0, 2, 5, 20}) {
    for (int kv : {1, 4, 7, 11}) {
      const auto f = mode(kx, kv);
      const double s = std::cbrt(static_cast<double>(kx)) + kv;
      for (int j = 0; j <= part.j_max(); ++j) {
        auto expect = f;
        for (auto& v : expect.values()) v *= oracle_phi(j, s);
        CHECK(max_abs_diff(block(f, j, part), expect) < 1e-10);
      }
    }
  }
}

TEST_CASE("block algebra: reconstruction, enlarged ring, linearity, translation") {
  const auto corpus = kmv::testing::smooth_corpus(kmv::testing::periodic_box(64, 64, 8.0, 8.0));
  const auto part = DyadicPartition::for_grid(corpus[0], kKin);
  const auto& f = corpus[1];
  const auto& g = corpus[2];
  const auto blocks = all_blocks(f, part);
  auto sum = blocks[0];
  for (std::size_t j = 1; j < blocks.size(); ++j)
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += blocks[j][i];
  CHECK(max_abs_diff(sum, f) < 1e-10);

  for (int j = 0; j <= part.j_max(); ++j) {
    const auto rj = block(f, j, part);
    CHECK(max_abs_diff(block(enlarged_block(f, j, part), j, part), rj) < 1e-10);
    CHECK(mixed_lp_norm(rj, MultiIndex({2.0, 2.0})) <= mixed_lp_norm(f, MultiIndex({2.0, 2.0})) * (1 + 1e-12));

    auto lin = f;
    for (std::size_t i = 0; i < lin.size(); ++i) lin[i] = 2.0 * f[i] - 0.5 * g[i];
    auto expect = rj;
    const auto rg = block(g, j, part);
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = 2.0 * rj[i] - 0.5 * rg[i];
    CHECK(max_abs_diff(block(lin, j, part), expect) < 1e-12);

    // Periodic shift by (3, -5) cells commutes with R_j.
    const auto shift = [](const SampledField& in) {
      auto out = in;
      const std::size_t n0 = in.shape()[0], n1 = in.shape()[1];
      for (std::size_t a = 0; a < n0; ++a)
        for (std::size_t b = 0; b < n1; ++b) out[((a + 3) % n0) * n1 + (b + n1 - 5) % n1] = in[a * n1 + b];
      return out;
    };
    CHECK(max_abs_diff(block(shift(f), j, part), shift(rj)) < 1e-12);
  }
}

TEST_CASE("besov_norm values") {
  const auto z = torus();
  const auto part = DyadicPartition::for_grid(z, kKin);
  CHECK(besov_norm(z, 0.7, MultiIndex({2.0, 3.0}), part).norm == 0.0);

  const auto f = mode(8, 6);
  const MultiIndex p({2.0, 2.0});
  const auto r = besov_norm(f, 0.5, p, part);
  CHECK(r.norm == doctest::Approx(std::pow(2.0, 0.5 * 3) * mixed_lp_norm(f, p)).epsilon(1e-10));
  CHECK(r.per_block.size() == static_cast<std::size_t>(part.j_max() + 1));
  CHECK(r.tail == 0.0);

  const auto corpus = kmv::testing::smooth_corpus(kmv::testing::periodic_box(64, 64, 8.0, 8.0), 5, 6);
  for (const auto& g : corpus) {
    double prev = 0.0;
    for (double s : {-0.5, 0.0, 0.3, 0.9, 1.5}) {
      const double n = besov_norm(g, s, p, part).norm;
      CHECK(n >= prev * (1 - 1e-14));
      prev = n;
    }
  }

  nlohmann::json j = r;
  CHECK(j["j_max"] == part.j_max());
  CHECK(j["per_block"].size() == r.per_block.size());
}

TEST_CASE("narrow Gaussian blocks against the analytic Fourier transform") {
  auto f = torus();
  const double sx = 0.3, sv = 0.25;
  f.fill([&](std::span<const double> z) {
    return std::exp(-0.5 * (z[0] * z[0] / (sx * sx) + z[1] * z[1] / (sv * sv)));
  });
  const auto part = DyadicPartition::for_grid(f, kKin);
  const auto rep = besov_norm(f, 0.0, MultiIndex({2.0, 2.0}), part);
  const double area = 4 * kPi * kPi;
  for (int j = 0; j <= part.j_max(); ++j) {
    double acc = 0.0;
    for (int kx = -32; kx < 32; ++kx) {
      for (int kv = -32; kv < 32; ++kv) {
        const double fh = 2 * kPi * sx * sv * std::exp(-0.5 * (sx * sx * kx * kx + sv * sv * kv * kv));
        const double ph = oracle_phi(j, std::cbrt(std::abs(static_cast<double>(kx))) + std::abs(kv));
        acc += ph * ph * fh * fh;
      }
    }
    CHECK(rep.per_block[static_cast<std::size_t>(j)] == doctest::Approx(std::sqrt(acc / area)).epsilon(1e-8));
  }
  CHECK(rep.norm <= mixed_lp_norm(f, MultiIndex({2.0, 2.0})));
}

TEST_CASE("difference characterization") {
  auto c = kmv::testing::periodic_box(32, 32, 4.0, 4.0);
  c.fill([](auto) { return -2.0; });
  const MultiIndex p({2.0, 3.0});
  CHECK(difference_norm(c, 0.5, p, kKin) == doctest::Approx(2.0 * std::pow(8.0, 0.5) * std::pow(8.0, 1.0 / 3)));
  auto s = torus(32);
  s.fill([](std::span<const double> z) { return std::sin(z[0]); });
  const double d = difference_norm(s, 0.4, p, kKin);
  CHECK(d > mixed_lp_norm(s, p));
  CHECK(std::isfinite(d));
  CHECK_THROWS_AS(difference_norm(s, 1.0, p, kKin), ContractViolation);
}

TEST_CASE("Bernstein ratios") {
  const auto part = DyadicPartition::for_grid(torus(), kKin);
  const MultiIndex p2({2.0, 2.0});
  const auto f = mode(8, 6);
  const auto id = bernstein_check(f, 3, 0, 0, p2, p2, part);
  CHECK(id.ratio == doctest::Approx(1.0).epsilon(1e-12));
  // d/dv of the ring-3 mode: |k_v| / 2^{3 a_v} = 6 / 8, for any amplitude.
  auto f5 = f;
  for (auto& v : f5.values()) v *= 5.0;
  CHECK(bernstein_check(f, 3, 1, 1, p2, p2, part).ratio == doctest::Approx(6.0 / 8.0).epsilon(1e-10));
  CHECK(bernstein_check(f5, 3, 1, 1, p2, p2, part).ratio == doctest::Approx(6.0 / 8.0).epsilon(1e-10));
  CHECK(bernstein_check(f, 3, 1, 0, p2, p2, part).ratio == doctest::Approx(8.0 / 512.0).epsilon(1e-10));
  CHECK(bernstein_check(f, 1, 1, 1, p2, p2, part).degenerate);
  CHECK_THROWS_AS(bernstein_check(f, 3, 1, 1, MultiIndex({3.0, 3.0}), p2, part), PreconditionError);
}

TEST_CASE("Bony decomposition reconstructs products") {
  const auto corpus = kmv::testing::smooth_corpus(kmv::testing::periodic_box(64, 64, 8.0, 8.0), 9, 4);
  const auto part = DyadicPartition::for_grid(corpus[0], kKin);
  auto one = corpus[0];
  one.fill([](auto) { return 1.0; });
  const auto& f = corpus[1];
  const auto pp = bony_paraproducts(f, one, part);
  CHECK(mixed_lp_norm(pp.low_high, MultiIndex({kInf, kInf})) < 1e-12);
  auto total = pp.low_high;
  for (std::size_t i = 0; i < total.size(); ++i) total[i] += pp.resonant[i] + pp.high_low[i];
  CHECK(max_abs_diff(total, f) < 1e-10);

  const auto m = mode(8, 6);
  const auto mm = bony_paraproducts(m, m, DyadicPartition::for_grid(m, kKin));
  auto prod = m;
  for (auto& v : prod.values()) v *= v;
  CHECK(max_abs_diff(mm.resonant, prod) < 1e-10);
  CHECK(mixed_lp_norm(mm.low_high, MultiIndex({kInf, kInf})) < 1e-10);

  for (std::size_t a = 0; a + 1 < corpus.size(); ++a) {
    const auto q = bony_paraproducts(corpus[a], corpus[a + 1], part);
    double worst = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
      worst = std::max(worst, std::abs(q.low_high[i] + q.resonant[i] + q.high_low[i] - corpus[a][i] * corpus[a + 1][i]));
    CHECK(worst < 1e-8);
  }
  auto zero = f;
  zero.fill([](auto) { return 0.0; });
  const auto z = bony_paraproducts(zero, f, part);
  CHECK(mixed_lp_norm(z.resonant, MultiIndex({kInf, kInf})) == 0.0);
  CHECK(mixed_lp_norm(z.high_low, MultiIndex({kInf, kInf})) == 0.0);
}

TEST_CASE("interpolation, square-root and duality ratios") {
  const auto corpus = kmv::testing::smooth_corpus(kmv::testing::periodic_box(64, 64, 8.0, 8.0), 17, 6);
  const auto part = DyadicPartition::for_grid(corpus[0], kKin);
  const MultiIndex p2({2.0, 2.0}), p4({4.0, 4.0}), p43({4.0 / 3, 4.0 / 3});
  // s - a.(1/p) bookkeeping with |a| = 4: (s0 - 2) and (s1 - 1) average to s - 4/(8/3).
  const BesovIndex lo{0.2, p2}, hi{1.0, p4};
  const BesovIndex target{0.5 * (0.2 - 2.0) + 0.5 * (1.0 - 1.0) + 4.0 * 3.0 / 8.0, MultiIndex({8.0 / 3, 8.0 / 3})};
  for (const auto& f : corpus) {
    const auto r = interpolation_check(f, target, lo, hi, 0.5, part);
    CHECK(r.ratio > 0.0);
    CHECK(r.ratio < 10.0);
    CHECK(interpolation_check(f, lo, lo, hi, 0.0, part).ratio == doctest::Approx(1.0));
    CHECK(interpolation_check(f, hi, lo, hi, 1.0, part).ratio == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(interpolation_check(corpus[0], BesovIndex{0.9, p2}, lo, hi, 0.5, part), PreconditionError);

  auto zero = corpus[0];
  zero.fill([](auto) { return 0.0; });
  CHECK(square_root_norm_check(zero, 0.5, p2, kKin).degenerate);
  auto c = corpus[0];
  c.fill([](auto) { return 1.7; });
  CHECK(square_root_norm_check(c, 0.5, p2, kKin).ratio == doctest::Approx(1.0).epsilon(1e-12));
  auto neg = c;
  neg[0] = -1.0;
  CHECK_THROWS_AS(square_root_norm_check(neg, 0.5, p2, kKin), PreconditionError);

  for (std::size_t a = 0; a + 1 < corpus.size(); ++a) {
    const auto d = duality_check(corpus[a], corpus[a + 1], 0.3, 0.6, p43, p4, part);
    CHECK(d.ratio < 10.0);
  }
  CHECK_THROWS_AS(duality_check(corpus[0], corpus[1], 0.6, 0.3, p2, p2, part), PreconditionError);
}

#include "kmv/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kmv/aniso_besov.hpp"
#include "kmv/degiorgi_diag.hpp"
#include "kmv/errors.hpp"
#include "kmv/field_io.hpp"
#include "kmv/fpk_solver.hpp"
#include "kmv/particle_system.hpp"
#include "kmv/rng.hpp"

namespace kmv {

namespace {

using nlohmann::json;

constexpr double kTimeTol = 1e-9;

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

struct EmpiricalMoments {
  Eigen::VectorXd mean;
  Matrix cov;
};

EmpiricalMoments ensemble_moments(const ParticleEnsemble& e) {
  const auto n = static_cast<Eigen::Index>(e.dim());
  EmpiricalMoments m{Eigen::VectorXd::Zero(n), Matrix::Zero(n, n)};
  const double N = static_cast<double>(e.size());
  for (std::size_t i = 0; i < e.size(); ++i)
    for (Eigen::Index k = 0; k < n; ++k) m.mean(k) += e.particle(i)[static_cast<std::size_t>(k)] / N;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto z = e.particle(i);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        m.cov(a, b) += (z[static_cast<std::size_t>(a)] - m.mean(a)) * (z[static_cast<std::size_t>(b)] - m.mean(b)) / N;
  }
  return m;
}

double fraction_in_box(const ParticleEnsemble& e, double hx, double hv) {
  std::size_t in = 0;
  const auto d = static_cast<std::size_t>(e.d);
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto z = e.particle(i);
    bool ok = true;
    for (std::size_t k = 0; k < d; ++k) ok = ok && std::abs(z[k]) <= hx && std::abs(z[d + k]) <= hv;
    in += ok ? 1 : 0;
  }
  return static_cast<double>(in) / static_cast<double>(e.size());
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double t : v)
    if (out.empty() || t - out.back() > kTimeTol) out.push_back(t);
  return out;
}

template <class Snap>
const Snap& at_time(const std::vector<Snap>& snaps, double t) {
  for (const auto& s : snaps)
    if (std::abs(s.t - t) <= kTimeTol) return s;
  throw NumericalError("no snapshot recorded at t = " + std::to_string(t));
}

const GridDensity& grid_at(const std::vector<GridDensity>& snaps, double t) { return at_time(snaps, t); }
const ParticleEnsemble& ensemble_at(const std::vector<ParticleEnsemble>& snaps, double t) { return at_time(snaps, t); }

// Largest relative error of (means, variances, covariance) against the closed form,
// with means measured relative to the matching standard deviation.
double gaussian_error(const Eigen::VectorXd& mean, const Matrix& cov, const GaussianMoments& g) {
  const auto d = g.var_x.size();
  double err = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const auto ix = static_cast<Eigen::Index>(k), iv = static_cast<Eigen::Index>(d + k);
    err = std::max(err, std::abs(cov(ix, ix) - g.var_x[k]) / g.var_x[k]);
    err = std::max(err, std::abs(cov(iv, iv) - g.var_v[k]) / g.var_v[k]);
    err = std::max(err, std::abs(cov(ix, iv) - g.cov_xv[k]) / std::sqrt(g.var_x[k] * g.var_v[k]));
    err = std::max(err, std::abs(mean(ix) - g.mean[k]) / std::sqrt(g.var_x[k]));
    err = std::max(err, std::abs(mean(iv) - g.mean[d + k]) / std::sqrt(g.var_v[k]));
  }
  return err;
}

void fill_product_gaussian(GridDensity& g, const std::vector<double>& mean, const std::vector<double>& sd) {
  g.rho.fill([&](std::span<const double> z) {
    double e = 0.0, norm = 1.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double u = (z[k] - mean[k]) / sd[k];
      e += u * u;
      norm *= sd[k] * std::sqrt(2.0 * 3.14159265358979323846);
    }
    return std::exp(-0.5 * e) / norm;
  });
  normalize_mass(g);
}

std::string file_index(std::size_t k) {
  std::string s = std::to_string(k);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

void walk(const json& a, const json& b, const std::string& path, json& deltas, json& missing, double& max_abs) {
  if (a.is_object() && b.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (b.contains(it.key())) {
        walk(it.value(), b.at(it.key()), path + "/" + it.key(), deltas, missing, max_abs);
      } else {
        missing.push_back(path + "/" + it.key());
      }
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!a.contains(it.key())) missing.push_back(path + "/" + it.key());
    return;
  }
  if (a.is_array() && b.is_array()) {
    const auto n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) walk(a[i], b[i], path + "/" + std::to_string(i), deltas, missing, max_abs);
    for (std::size_t i = n; i < std::max(a.size(), b.size()); ++i) missing.push_back(path + "/" + std::to_string(i));
    return;
  }
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    deltas[path] = y - x;
    max_abs = std::max(max_abs, std::abs(y - x));
    return;
  }
  if (a != b) missing.push_back(path);
}

}  // namespace

GaussianMoments free_gaussian_moments(const std::vector<double>& mean, const std::vector<double>& sd, double a0,
                                      double t) {
  const auto d = mean.size() / 2;
  GaussianMoments g;
  g.mean = mean;
  for (std::size_t k = 0; k < d; ++k) {
    const double sx2 = sd[k] * sd[k], sv2 = sd[d + k] * sd[d + k];
    g.mean[k] = mean[k] + t * mean[d + k];
    g.var_x.push_back(sx2 + t * t * sv2 + 2.0 * a0 * t * t * t / 3.0);
    g.cov_xv.push_back(t * sv2 + a0 * t * t);
    g.var_v.push_back(sv2 + 2.0 * a0 * t);
  }
  return g;
}

json run_scenario(const Scenario& s, const RunOptions& opt) {
  validate(s);
  const std::uint64_t master = opt.seed.value_or(s.seed);
  const auto spec = s.coefficients();
  const auto& diag = s.diagnostics;
  const auto dz = 2 * static_cast<std::size_t>(s.d);

  auto snap_times = s.snapshots;
  snap_times.push_back(s.T);
  snap_times = sorted_unique(snap_times);
  std::vector<double> frames;
  for (std::size_t k = 0; k <= diag.frames; ++k)
    frames.push_back(s.T * static_cast<double>(k) / static_cast<double>(diag.frames));

  if (opt.write_artifacts) std::filesystem::create_directories(opt.out_dir);
  json files = json::array();

  json report;
  report["schema_version"] = kReportSchemaVersion;
  report["scenario"] = {{"name", s.name}, {"hash", hex64(s.hash())}, {"spec_hash", hex64(spec.hash())},
                        {"preset", s.preset}, {"d", s.d}, {"T", s.T}};
  json seeds = {{"master", master}};

  // Grid solve.
  std::vector<GridDensity> gsnaps;
  if (s.grid.enabled) {
    auto g0 = make_phase_grid(s.d, s.grid.nx, s.grid.nv, s.grid.half_x, s.grid.half_v);
    fill_product_gaussian(g0, s.mean, s.stddev);
    double dt = s.grid.dt.value_or(0.9 * cfl_limit(g0, spec));
    std::vector<double> outs;
    for (double t : snap_times)
      if (t < s.T - kTimeTol) outs.push_back(t);
    if (diag.besov || diag.degiorgi)
      for (double t : frames)
        if (t > kTimeTol && t < s.T - kTimeTol) outs.push_back(t);
    FpkTrajectory tr;
    // A defaulted step also backs off to the drift-aware bound; an explicit one is kept.
    for (int attempt = 0;; ++attempt) {
      try {
        tr = fpk_solve(g0, spec, s.T, dt, sorted_unique(outs));
        break;
      } catch (const CflError& e) {
        if (s.grid.dt || attempt >= 8) throw;
        dt = 0.9 * std::min(dt, e.admissible_dt());
      }
    }
    gsnaps = std::move(tr.snapshots);
    json gj = run_metadata(spec, gsnaps.back(), tr.log);
    gj["snapshots"] = json::array();
    for (std::size_t k = 0; k < snap_times.size(); ++k) {
      const auto& g = grid_at(gsnaps, snap_times[k]);
      const auto m = moments(g);
      gj["snapshots"].push_back({{"t", g.t}, {"mass", m.mass}, {"mean", vector_json(m.mean)}, {"cov", matrix_json(m.cov)}});
      if (opt.write_artifacts) {
        const auto name = "grid_" + file_index(k) + ".bin";
        write_field(opt.out_dir / name, g.rho);
        files.push_back(name);
      }
    }
    report["grid"] = gj;
  }

  // Particle run.
  ParticleTrajectory ptraj;
  if (s.particles.enabled) {
    seeds["particles"] = derive_seed(master, "particles");
    const auto e0 = sample_ensemble(s.d, s.particles.N, s.initial_law(), seeds["particles"].get<std::uint64_t>(),
                                    s.particles.level);
    ParticleOptions popt;
    popt.bandwidth_c = s.particles.bandwidth_c;
    SimulateOptions sim;
    sim.snapshot_times = snap_times;
    sim.keep_path = diag.krylov;
    ptraj = simulate(e0, spec, s.T, s.particles.dt, sim, popt);
    const double bw = s.particles.kde_bandwidth > 0.0 ? s.particles.kde_bandwidth
                                                      : s.particles.bandwidth_c / static_cast<double>(s.particles.level);
    json pj = {{"N", s.particles.N}, {"level", s.particles.level}, {"dt", s.particles.dt}, {"kde_bandwidth", bw}};
    pj["snapshots"] = json::array();
    for (std::size_t k = 0; k < snap_times.size(); ++k) {
      const auto& e = ensemble_at(ptraj.snapshots, snap_times[k]);
      const auto m = ensemble_moments(e);
      json sj = {{"t", e.t}, {"mean", vector_json(m.mean)}, {"cov", matrix_json(m.cov)}};
      if (opt.write_artifacts) {
        const auto name = "particles_" + file_index(k) + ".kmve";
        write_ensemble((opt.out_dir / name).string(), e);
        files.push_back(name);
      }
      if (s.grid.enabled) {
        const auto& g = grid_at(gsnaps, snap_times[k]);
        const auto kde = kde_on_grid(e, g, Mollifier::spatial(dz, bw));
        sj["mass_in_box"] = fraction_in_box(e, s.grid.half_x, s.grid.half_v);
        sj["kde_mass"] = kde.integral();
        sj["l1_kde_grid"] = l1_distance(kde, g.rho);
        if (opt.write_artifacts) {
          const auto name = "kde_" + file_index(k) + ".bin";
          write_field(opt.out_dir / name, kde);
          files.push_back(name);
        }
      }
      pj["snapshots"].push_back(sj);
    }
    report["particles"] = pj;
  }

  // Closed-form moments when the drift vanishes and the diffusion is constant.
  {
    json gc = {{"applicable", false}};
    if (!spec.has_drift() && spec.diffusion_constant && spec.diffusion_constant->isApprox(
                                                             (*spec.diffusion_constant)(0, 0) *
                                                             Matrix::Identity(s.d, s.d))) {
      const double a0 = (*spec.diffusion_constant)(0, 0);
      gc["applicable"] = true;
      gc["grid_tolerance"] = 0.02;
      const double ptol = std::max(0.02, 5.0 / std::sqrt(static_cast<double>(s.particles.N)));
      gc["particle_tolerance"] = ptol;
      double gerr = 0.0, perr = 0.0;
      for (double t : snap_times) {
        const auto ref = free_gaussian_moments(s.mean, s.stddev, a0, t);
        if (s.grid.enabled) {
          const auto m = moments(grid_at(gsnaps, t));
          gerr = std::max(gerr, gaussian_error(m.mean, m.cov, ref));
        }
        if (s.particles.enabled) {
          const auto m = ensemble_moments(ensemble_at(ptraj.snapshots, t));
          perr = std::max(perr, gaussian_error(m.mean, m.cov, ref));
        }
      }
      bool pass = true;
      if (s.grid.enabled) {
        gc["grid_max_error"] = gerr;
        pass = pass && gerr <= 0.02;
      }
      if (s.particles.enabled) {
        gc["particle_max_error"] = perr;
        pass = pass && perr <= ptol;
      }
      gc["pass"] = pass;
    }
    report["gaussian_check"] = gc;
  }

  if (diag.besov) {
    json table = json::array();
    const double h = s.T / static_cast<double>(diag.frames);
    for (const auto& b : diag.besov_pairs) {
      std::vector<double> per;
      double acc = 0.0;
      for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto& g = grid_at(gsnaps, frames[k]);
        const auto part = DyadicPartition::for_grid(g.rho, AnisotropyVector::kinetic(s.d));
        per.push_back(besov_norm(g.rho, b.alpha, b.p, part).norm);
        const double w = (k == 0 || k + 1 == frames.size()) ? 0.5 * h : h;
        acc += w * std::pow(per.back(), b.q);
      }
      table.push_back({{"q", b.q},
                       {"p", std::vector<double>(b.p.values().begin(), b.p.values().end())},
                       {"alpha", b.alpha},
                       {"norm", std::pow(acc, 1.0 / b.q)},
                       {"per_frame", per}});
    }
    report["besov"] = {{"frames", frames}, {"table", table}};
  }

  if (diag.krylov) {
    const auto bump = Mollifier::spatial(dz, diag.krylov_radius);
    const SpaceTimeTest f = [&](double, std::span<const double> z) { return bump(z); };
    const auto kr = krylov_check(ptraj, f, diag.krylov_exponents, diag.krylov_tau, diag.krylov_deltas);
    json ratios = json::array();
    for (double r : kr.ratios) ratios.push_back(number_or_null(r));
    report["krylov"] = {{"tau", diag.krylov_tau}, {"deltas", kr.deltas}, {"lhs", kr.lhs},
                        {"norms", kr.norms},      {"ratios", ratios},    {"theta", number_or_null(kr.theta)}};
  }

  if (diag.degiorgi) {
    std::vector<GridDensity> stack;
    for (double t : frames) stack.push_back(grid_at(gsnaps, t));
    const auto u = stack_snapshots(stack);
    const double scale = 0.95 * std::min({std::sqrt(s.T / 8.0), 0.5 * std::cbrt(s.grid.half_x), 0.5 * s.grid.half_v});
    const CylinderFamily Q{0.5 * s.T, std::vector<double>(static_cast<std::size_t>(s.d), 0.0),
                           std::vector<double>(static_cast<std::size_t>(s.d), 0.0), scale};
    const auto n = u.ndim();
    CertificateOptions co;
    co.family = {{MultiIndex::uniform(n, 2.0), MultiIndex::uniform(n, 4.0), MultiIndex::uniform(n, 1.5)}, 2};
    co.lambda = diag.degiorgi_lambda;
    co.A = diag.degiorgi_A;
    std::optional<DeGiorgiCertificate> fitted;
    try {
      fitted = fit_certificate(u, Q, co);
    } catch (const ContractViolation& e) {
      // Too coarse for the cylinder lattice: keep the rest of the run.
      report["degiorgi"] = {{"cylinder_scale", scale}, {"refused", e.what()}};
    }
    if (fitted) {
      const auto& cert = *fitted;
      const auto lb = local_bound_check(u, cert, Q, 2.0, 1.0, 2.0);
      report["degiorgi"] = {{"certificate", cert.to_json()},
                            {"cylinder_scale", scale},
                            {"local_bound",
                             {{"p", 2.0},
                              {"tau", 1.0},
                              {"sigma", 2.0},
                              {"lhs", lb.lhs},
                              {"rhs", lb.rhs},
                              {"ratio", number_or_null(lb.ratio)},
                              {"degenerate", lb.degenerate},
                              {"inconsistent", lb.inconsistent}}}};
    }
  }

  if (diag.stability) {
    StabilityConfig cfg;
    cfg.levels = diag.stability_levels;
    cfg.seeds = diag.stability_seeds;
    if (cfg.seeds.empty())
      for (int k = 0; k < 3; ++k) cfg.seeds.push_back(derive_seed(master, "stability/" + std::to_string(k)));
    seeds["stability"] = cfg.seeds;
    cfg.N = diag.stability_N;
    cfg.T = s.T;
    cfg.dt = s.particles.dt;
    cfg.law = s.initial_law();
    cfg.eval_grid = make_phase_grid(s.d, s.grid.nx, s.grid.nv, s.grid.half_x, s.grid.half_v);
    ParticleOptions popt;
    popt.bandwidth_c = s.particles.bandwidth_c;
    const auto rep = stability_sweep(spec, cfg, popt);
    json per_seed = json::array();
    for (std::size_t i = 0; i < rep.seeds.size(); ++i) {
      json rows = json::array();
      for (const auto& p : rep.pairs[i])
        rows.push_back({{"level", p.level}, {"finer", p.finer}, {"l1", p.l1}, {"w2", p.w2}, {"coupling", p.coupling}});
      per_seed.push_back({{"seed", rep.seeds[i]}, {"pairs", rows}});
    }
    report["stability"] = {{"per_seed", per_seed},
                           {"monotone_l1", rep.monotone_l1},
                           {"monotone_coupling", rep.monotone_coupling},
                           {"eval_bandwidth", cfg.eval_bandwidth}};
  }
  report["seeds"] = seeds;

  if (opt.write_artifacts) {
    std::ofstream(opt.out_dir / "report.json") << report.dump(2) << "\n";
    files.push_back("report.json");
    const json manifest = {{"schema_version", kReportSchemaVersion},
                           {"scenario_hash", hex64(s.hash())},
                           {"spec_hash", hex64(spec.hash())},
                           {"seeds", seeds},
                           {"scenario", s.to_json()},
                           {"files", files}};
    std::ofstream(opt.out_dir / "manifest.json") << manifest.dump(2) << "\n";
  }
  return report;
}

json compare_reports(const json& a, const json& b) {
  if (!a.contains("schema_version") || !b.contains("schema_version"))
    throw ContractViolation("compare: reports carry no schema_version");
  if (a["schema_version"] != b["schema_version"])
    throw ContractViolation("compare: schema versions differ (" + a["schema_version"].dump() + " vs " +
                            b["schema_version"].dump() + ")");
  json deltas = json::object(), missing = json::array();
  double max_abs = 0.0;
  walk(a, b, "", deltas, missing, max_abs);
  return {{"schema_version", a["schema_version"]},
          {"identical", max_abs == 0.0 && missing.empty()},
          {"max_abs_delta", max_abs},
          {"deltas", deltas},
          {"mismatched", missing}};
}

}  // namespace kmv

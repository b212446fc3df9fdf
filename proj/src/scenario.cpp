#include "kmv/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "toml.hpp"

namespace kmv {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

void check_keys(const toml::table& t, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : t) {
    const std::string key(k.str());
    if (!allowed.count(key))
      throw ScenarioError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

double as_number(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>()) return *v;
  throw ScenarioError("'" + key + "' must be a number");
}

std::vector<double> as_numbers(const toml::node& n, const std::string& key) {
  std::vector<double> out;
  if (const auto* arr = n.as_array()) {
    for (const auto& e : *arr) out.push_back(as_number(e, key));
  } else {
    out.push_back(as_number(n, key));
  }
  return out;
}

bool as_bool(const toml::node& n, const std::string& key) {
  if (auto v = n.value<bool>()) return *v;
  throw ScenarioError("'" + key + "' must be true or false");
}

std::int64_t as_int(const toml::node& n, const std::string& key) {
  if (n.is_integer()) return *n.value<std::int64_t>();
  throw ScenarioError("'" + key + "' must be an integer");
}

std::size_t as_count(const toml::node& n, const std::string& key) {
  const auto v = as_int(n, key);
  if (v < 1) throw ScenarioError("'" + key + "' must be a positive integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t as_seed(const toml::node& n, const std::string& key) {
  const auto v = as_int(n, key);
  if (v < 0) throw ScenarioError("'" + key + "' must be a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

// Scalars broadcast to n entries.
std::vector<double> broadcast(std::vector<double> v, std::size_t n, const std::string& key) {
  if (v.size() == 1) return std::vector<double>(n, v[0]);
  if (v.size() != n) throw ScenarioError("'" + key + "' needs 1 or " + std::to_string(n) + " entries");
  return v;
}

MultiIndex as_index(const toml::node& n, std::size_t len, const std::string& key) {
  const auto v = broadcast(as_numbers(n, key), len, key);
  for (double x : v)
    if (!(x > 0.0)) throw ScenarioError("'" + key + "' entries must be positive");
  return MultiIndex(v);
}

double weighted(const MultiIndex& p, int d) { return p.weighted_reciprocal(AnisotropyVector::kinetic(d)); }

}  // namespace

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void check_drift_exponents(const DriftExponents& e, int d, bool density_dependent) {
  const auto n = 2 * static_cast<std::size_t>(d);
  if (e.p1.size() != n) throw ScenarioError("p₁ needs " + std::to_string(n) + " entries");
  for (double p : e.p1.values())
    if (!(p > 2.0)) throw ScenarioError("drift exponents violate p₁ ∈ (2, ∞)^{2d}: entry " + num(p));
  if (!(e.q1 > 2.0)) throw ScenarioError("drift exponents violate q₁ > 2: q₁ = " + num(e.q1));
  const double lhs = 2.0 / e.q1 + weighted(e.p1, d);
  if (e.q1 < 4.0) {
    if (!(lhs < 1.0))
      throw ScenarioError("drift exponents violate 2/q₁ + a·(1/p₁) < 1: " + num(lhs) + " >= 1");
    return;
  }
  // Outside (2, 4) only density-independent drifts are admitted, under the stronger pair.
  if (density_dependent)
    throw ScenarioError("drift exponents violate q₁ ∈ (2, 4) for a density-dependent drift: q₁ = " + num(e.q1));
  if (!(lhs < 1.0)) throw ScenarioError("drift exponents violate a·(1/p₁) + 2/q₁ < 1: " + num(lhs) + " >= 1");
  for (double p : e.p1.values())
    if (!(1.0 / p < 0.5 - 1.0 / e.q1))
      throw ScenarioError("drift exponents violate 1/p₁ < (1/2 − 1/q₁)·1: 1/" + num(p) + " >= " + num(0.5 - 1.0 / e.q1));
}

void check_krylov_condition(const KrylovExponents& e, int d) {
  const auto n = 2 * static_cast<std::size_t>(d);
  if (e.p0.size() != n) throw ScenarioError("p₀ needs " + std::to_string(n) + " entries");
  if (!(e.q0 > 1.0)) throw ScenarioError("krylov exponents violate q₀ ∈ (1, ∞): q₀ = " + num(e.q0));
  for (double p : e.p0.values())
    if (!(p > 1.0) || std::isinf(p)) throw ScenarioError("krylov exponents violate p₀ ∈ (1, ∞)^{2d}: entry " + num(p));
  if (!(e.alpha0 >= 0.0 && e.alpha0 < 1.0))
    throw ScenarioError("krylov exponents violate α₀ ∈ [0, 1): α₀ = " + num(e.alpha0));
  if (!(1.0 - e.alpha0 < 2.0 / e.q0))
    throw ScenarioError("krylov exponents violate 1 − α₀ < 2/q₀: " + num(1.0 - e.alpha0) + " >= " + num(2.0 / e.q0));
  const double lhs = 2.0 / e.q0 + weighted(e.p0, d), rhs = 2.0 - 2.0 * e.alpha0;
  if (!(lhs < rhs))
    throw ScenarioError("krylov exponents violate 2/q₀ + a·(1/p₀) < 2 − 2α₀: " + num(lhs) + " >= " + num(rhs));
}

void check_besov_pair(const BesovPair& b, int d) {
  const auto n = 2 * static_cast<std::size_t>(d);
  if (b.p.size() != n) throw ScenarioError("Besov p needs " + std::to_string(n) + " entries");
  if (!(b.alpha > 0.0 && b.alpha < 1.0)) throw ScenarioError("Besov pair violates α ∈ (0, 1): α = " + num(b.alpha));
  if (!(b.q > 1.0) || std::isinf(b.q)) throw ScenarioError("Besov pair violates q ∈ (1, ∞): q = " + num(b.q));
  for (double p : b.p.values())
    if (!(p > 1.0) || std::isinf(p)) throw ScenarioError("Besov pair violates p ∈ (1, ∞)^{2d}: entry " + num(p));
  if (!(2.0 / b.q < 1.0 + b.alpha))
    throw ScenarioError("Besov pair violates 2/q < 1 + α: " + num(2.0 / b.q) + " >= " + num(1.0 + b.alpha));
  const double lhs = 2.0 / b.q + weighted(b.p, d) - AnisotropyVector::kinetic(d).total();
  if (!(lhs > 2.0 * b.alpha))
    throw ScenarioError("Besov pair violates 2/q + a·(1/p − 1) > 2α: " + num(lhs) + " <= " + num(2.0 * b.alpha));
}

CoefficientSpec Scenario::coefficients() const {
  try {
    return make_preset(preset, d, params);
  } catch (const ContractViolation& e) {
    throw ScenarioError(std::string("coefficients: ") + e.what());
  }
}

InitialLaw Scenario::initial_law() const { return {mean, stddev}; }

nlohmann::json Scenario::to_json() const {
  using nlohmann::json;
  auto idx = [](const MultiIndex& p) { return std::vector<double>(p.values().begin(), p.values().end()); };
  json j;
  j["name"] = name;
  j["d"] = d;
  j["coefficients"] = {{"preset", preset}, {"params", params}};
  j["initial"] = {{"mean", mean}, {"stddev", stddev}};
  j["grid"] = {{"enabled", grid.enabled}, {"nx", grid.nx},         {"nv", grid.nv},
               {"half_x", grid.half_x},   {"half_v", grid.half_v}, {"dt", grid.dt ? json(*grid.dt) : json(nullptr)}};
  j["particles"] = {{"enabled", particles.enabled},         {"N", particles.N},
                    {"level", particles.level},             {"dt", particles.dt},
                    {"bandwidth_c", particles.bandwidth_c}, {"kde_bandwidth", particles.kde_bandwidth}};
  j["schedule"] = {{"T", T}, {"snapshots", snapshots}};
  j["exponents"] = drift_exponents ? json{{"q1", drift_exponents->q1}, {"p1", idx(drift_exponents->p1)}} : json(nullptr);
  const auto& g = diagnostics;
  json pairs = json::array();
  for (const auto& b : g.besov_pairs) pairs.push_back({{"q", b.q}, {"p", idx(b.p)}, {"alpha", b.alpha}});
  j["diagnostics"] = {{"frames", g.frames},
                      {"besov", g.besov},
                      {"besov_pairs", pairs},
                      {"krylov", g.krylov},
                      {"krylov_q0", g.krylov_exponents.q0},
                      {"krylov_p0", idx(g.krylov_exponents.p0)},
                      {"krylov_alpha0", g.krylov_exponents.alpha0},
                      {"krylov_tau", g.krylov_tau},
                      {"krylov_deltas", g.krylov_deltas},
                      {"krylov_radius", g.krylov_radius},
                      {"degiorgi", g.degiorgi},
                      {"degiorgi_lambda", g.degiorgi_lambda},
                      {"degiorgi_A", g.degiorgi_A},
                      {"stability", g.stability},
                      {"stability_levels", g.stability_levels},
                      {"stability_seeds", g.stability_seeds},
                      {"stability_N", g.stability_N}};
  return j;
}

std::uint64_t Scenario::hash() const {
  const std::string s = to_json().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Scenario parse_scenario(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "scenario syntax error: " << e.description() << " at line " << e.source().begin.line;
    throw ScenarioError(os.str());
  }
  check_keys(root, "", {"name", "seed", "d", "coefficients", "initial", "grid", "particles", "schedule", "exponents",
                        "diagnostics"});
  Scenario s;
  if (auto n = root["name"]) {
    if (!n.is_string()) throw ScenarioError("'name' must be a string");
    s.name = *n.value<std::string>();
  }
  if (auto n = root["seed"].node()) s.seed = as_seed(*n, "seed");
  if (auto n = root["d"].node()) s.d = static_cast<int>(as_int(*n, "d"));
  if (s.d < 1 || s.d > 3) throw ScenarioError("'d' must be 1, 2 or 3");
  const auto nz = 2 * static_cast<std::size_t>(s.d);

  const auto* coef = root["coefficients"].as_table();
  if (!coef) throw ScenarioError("missing [coefficients] section");
  check_keys(*coef, "coefficients", {"preset", "params"});
  if (auto p = (*coef)["preset"].value<std::string>()) {
    s.preset = *p;
  } else {
    throw ScenarioError("'coefficients.preset' must be a string");
  }
  if (auto n = (*coef)["params"].node()) {
    const auto* t = n->as_table();
    if (!t) throw ScenarioError("'coefficients.params' must be a table");
    for (const auto& [k, v] : *t) s.params[std::string(k.str())] = as_number(v, "coefficients.params." + std::string(k.str()));
  }

  s.mean.assign(nz, 0.0);
  s.stddev.assign(nz, 1.0);
  if (const auto* t = root["initial"].as_table()) {
    check_keys(*t, "initial", {"mean", "stddev"});
    if (auto n = (*t)["mean"].node()) s.mean = broadcast(as_numbers(*n, "initial.mean"), nz, "initial.mean");
    if (auto n = (*t)["stddev"].node()) s.stddev = broadcast(as_numbers(*n, "initial.stddev"), nz, "initial.stddev");
  }

  if (const auto* t = root["grid"].as_table()) {
    check_keys(*t, "grid", {"enabled", "nx", "nv", "half_x", "half_v", "dt"});
    if (auto n = (*t)["enabled"].node()) s.grid.enabled = as_bool(*n, "grid.enabled");
    if (auto n = (*t)["nx"].node()) s.grid.nx = as_count(*n, "grid.nx");
    if (auto n = (*t)["nv"].node()) s.grid.nv = as_count(*n, "grid.nv");
    if (auto n = (*t)["half_x"].node()) s.grid.half_x = as_number(*n, "grid.half_x");
    if (auto n = (*t)["half_v"].node()) s.grid.half_v = as_number(*n, "grid.half_v");
    if (auto n = (*t)["dt"].node()) s.grid.dt = as_number(*n, "grid.dt");
  }
  if (const auto* t = root["particles"].as_table()) {
    check_keys(*t, "particles", {"enabled", "N", "level", "dt", "bandwidth_c", "kde_bandwidth"});
    if (auto n = (*t)["enabled"].node()) s.particles.enabled = as_bool(*n, "particles.enabled");
    if (auto n = (*t)["N"].node()) s.particles.N = as_count(*n, "particles.N");
    if (auto n = (*t)["level"].node()) s.particles.level = static_cast<int>(as_count(*n, "particles.level"));
    if (auto n = (*t)["dt"].node()) s.particles.dt = as_number(*n, "particles.dt");
    if (auto n = (*t)["bandwidth_c"].node()) s.particles.bandwidth_c = as_number(*n, "particles.bandwidth_c");
    if (auto n = (*t)["kde_bandwidth"].node()) s.particles.kde_bandwidth = as_number(*n, "particles.kde_bandwidth");
  }
  if (const auto* t = root["schedule"].as_table()) {
    check_keys(*t, "schedule", {"T", "snapshots"});
    if (auto n = (*t)["T"].node()) s.T = as_number(*n, "schedule.T");
    if (auto n = (*t)["snapshots"].node()) s.snapshots = as_numbers(*n, "schedule.snapshots");
  }
  if (const auto* t = root["exponents"].as_table()) {
    check_keys(*t, "exponents", {"q1", "p1"});
    DriftExponents e;
    if (auto n = (*t)["q1"].node()) e.q1 = as_number(*n, "exponents.q1");
    const auto* p1 = (*t)["p1"].node();
    if (!p1) throw ScenarioError("'exponents.p1' is required with [exponents]");
    e.p1 = as_index(*p1, nz, "exponents.p1");
    s.drift_exponents = e;
  }
  auto& g = s.diagnostics;
  g.krylov_exponents.p0 = MultiIndex::uniform(nz, 4.0 * static_cast<double>(nz));
  if (const auto* t = root["diagnostics"].as_table()) {
    check_keys(*t, "diagnostics",
               {"frames", "besov", "besov_pairs", "krylov", "krylov_q0", "krylov_p0", "krylov_alpha0", "krylov_tau",
                "krylov_deltas", "krylov_radius", "degiorgi", "degiorgi_lambda", "degiorgi_A", "stability",
                "stability_levels", "stability_seeds", "stability_N"});
    const auto& tb = *t;
    if (auto n = tb["frames"].node()) g.frames = as_count(*n, "diagnostics.frames");
    if (auto n = tb["besov"].node()) g.besov = as_bool(*n, "diagnostics.besov");
    if (auto n = tb["besov_pairs"].node()) {
      const auto* arr = n->as_array();
      if (!arr) throw ScenarioError("'diagnostics.besov_pairs' must be an array of [q, p, alpha]");
      for (const auto& e : *arr) {
        const auto* row = e.as_array();
        if (!row || row->size() != 3) throw ScenarioError("'diagnostics.besov_pairs' entries must be [q, p, alpha]");
        BesovPair b;
        b.q = as_number(*row->get(0), "diagnostics.besov_pairs");
        b.p = as_index(*row->get(1), nz, "diagnostics.besov_pairs");
        b.alpha = as_number(*row->get(2), "diagnostics.besov_pairs");
        g.besov_pairs.push_back(b);
      }
    }
    if (auto n = tb["krylov"].node()) g.krylov = as_bool(*n, "diagnostics.krylov");
    if (auto n = tb["krylov_q0"].node()) g.krylov_exponents.q0 = as_number(*n, "diagnostics.krylov_q0");
    if (auto n = tb["krylov_p0"].node()) g.krylov_exponents.p0 = as_index(*n, nz, "diagnostics.krylov_p0");
    if (auto n = tb["krylov_alpha0"].node()) g.krylov_exponents.alpha0 = as_number(*n, "diagnostics.krylov_alpha0");
    if (auto n = tb["krylov_tau"].node()) g.krylov_tau = as_number(*n, "diagnostics.krylov_tau");
    if (auto n = tb["krylov_deltas"].node()) g.krylov_deltas = as_numbers(*n, "diagnostics.krylov_deltas");
    if (auto n = tb["krylov_radius"].node()) g.krylov_radius = as_number(*n, "diagnostics.krylov_radius");
    if (auto n = tb["degiorgi"].node()) g.degiorgi = as_bool(*n, "diagnostics.degiorgi");
    if (auto n = tb["degiorgi_lambda"].node()) g.degiorgi_lambda = as_number(*n, "diagnostics.degiorgi_lambda");
    if (auto n = tb["degiorgi_A"].node()) g.degiorgi_A = as_number(*n, "diagnostics.degiorgi_A");
    if (auto n = tb["stability"].node()) g.stability = as_bool(*n, "diagnostics.stability");
    if (auto n = tb["stability_levels"].node()) {
      g.stability_levels.clear();
      for (double x : as_numbers(*n, "diagnostics.stability_levels")) g.stability_levels.push_back(static_cast<int>(x));
    }
    if (auto n = tb["stability_seeds"].node()) {
      const auto* arr = n->as_array();
      if (!arr) throw ScenarioError("'diagnostics.stability_seeds' must be an array");
      for (const auto& e : *arr) g.stability_seeds.push_back(as_seed(e, "diagnostics.stability_seeds"));
    }
    if (auto n = tb["stability_N"].node()) g.stability_N = as_count(*n, "diagnostics.stability_N");
  }
  if (g.krylov_deltas.empty()) g.krylov_deltas = {s.T / 16, s.T / 8, s.T / 4};
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_scenario(os.str());
}

void validate(const Scenario& s) {
  const auto nz = 2 * static_cast<std::size_t>(s.d);
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), s.preset) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ScenarioError("unknown preset '" + s.preset + "' (available: " + list + ")");
  }
  const auto spec = s.coefficients();
  if (s.mean.size() != nz || s.stddev.size() != nz) throw ScenarioError("initial law needs 2d entries");
  for (double x : s.stddev)
    if (!(x > 0.0)) throw ScenarioError("initial stddev entries must be positive");
  if (!(s.T > 0.0)) throw ScenarioError("schedule.T must be positive");
  for (double t : s.snapshots)
    if (!(t > 0.0 && t <= s.T)) throw ScenarioError("snapshot time " + num(t) + " lies outside (0, T]");
  if (s.grid.enabled) {
    if (s.d > 2) throw ScenarioError("the grid solver supports d in {1, 2}; disable [grid] for d = 3");
    if (s.grid.nx < 2 || s.grid.nv < 2) throw ScenarioError("grid needs at least 2 cells per axis");
    if (!(s.grid.half_x > 0.0) || !(s.grid.half_v > 0.0)) throw ScenarioError("grid half-widths must be positive");
    if (s.grid.dt && !(*s.grid.dt > 0.0)) throw ScenarioError("grid.dt must be positive");
  }
  if (s.particles.enabled) {
    if (!(s.particles.dt > 0.0)) throw ScenarioError("particles.dt must be positive");
    if (!(s.particles.bandwidth_c > 0.0)) throw ScenarioError("particles.bandwidth_c must be positive");
    if (!(s.particles.kde_bandwidth >= 0.0)) throw ScenarioError("particles.kde_bandwidth must be nonnegative");
  }
  if (s.drift_exponents) check_drift_exponents(*s.drift_exponents, s.d, spec.drift_uses_density);
  const auto& g = s.diagnostics;
  if (g.frames < 2) throw ScenarioError("diagnostics.frames must be at least 2");
  if ((g.besov || g.degiorgi) && !s.grid.enabled)
    throw ScenarioError("Besov and De Giorgi diagnostics need the grid solver");
  if ((g.krylov || g.stability) && !s.particles.enabled)
    throw ScenarioError("Krylov and stability diagnostics need particles");
  if (g.besov && g.besov_pairs.empty()) throw ScenarioError("diagnostics.besov needs besov_pairs");
  for (const auto& b : g.besov_pairs) check_besov_pair(b, s.d);
  if (g.krylov) {
    check_krylov_condition(g.krylov_exponents, s.d);
    if (!(g.krylov_tau >= 0.0)) throw ScenarioError("diagnostics.krylov_tau must be nonnegative");
    for (double dl : g.krylov_deltas)
      if (!(dl > 0.0) || g.krylov_tau + dl > s.T + 1e-12)
        throw ScenarioError("krylov window [tau, tau + delta] must lie in [0, T]");
    if (!(g.krylov_radius > 0.0)) throw ScenarioError("diagnostics.krylov_radius must be positive");
  }
  if (g.degiorgi && !(g.degiorgi_lambda >= 0.0 && g.degiorgi_A >= 0.0))
    throw ScenarioError("De Giorgi lambda and A must be nonnegative");
  if (g.stability) {
    if (g.stability_levels.size() < 2) throw ScenarioError("stability sweep needs at least two levels");
    for (std::size_t i = 0; i < g.stability_levels.size(); ++i)
      if (g.stability_levels[i] < 1 || (i > 0 && g.stability_levels[i] <= g.stability_levels[i - 1]))
        throw ScenarioError("stability levels must be positive and increasing");
    if (s.d > 2) throw ScenarioError("stability sweep compares densities on a grid and needs d in {1, 2}");
  }
}

}  // namespace kmv

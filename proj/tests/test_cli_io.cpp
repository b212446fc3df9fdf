#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "kmv/field_io.hpp"
#include "kmv/report.hpp"
#include "kmv/scenario.hpp"

using namespace kmv;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(
name = "minimal"
seed = 5
[coefficients]
preset = "constant-diffusion"
params = { a0 = 0.5 }
[initial]
stddev = [0.5, 0.5]
[grid]
nx = 48
nv = 48
half_x = 6.0
half_v = 6.0
[particles]
N = 4000
level = 8
dt = 0.01
kde_bandwidth = 0.4
[schedule]
T = 0.5
snapshots = [0.25]
)";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("kmv_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string error_of(const std::string& toml) {
  try {
    parse_scenario(toml);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Runs the CLI binary named by KMV_CLI and returns its exit status.
int cli(const std::string& args, const fs::path& log) {
  const char* exe = std::getenv("KMV_CLI");
  REQUIRE_MESSAGE(exe != nullptr, "KMV_CLI is not set");
  const std::string cmd = std::string("\"") + exe + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("scenario parsing and defaults") {
  const auto s = parse_scenario(kMinimal);
  CHECK(s.name == "minimal");
  CHECK(s.seed == 5);
  CHECK(s.d == 1);
  CHECK(s.mean == std::vector<double>{0.0, 0.0});
  CHECK(s.stddev == std::vector<double>{0.5, 0.5});
  CHECK(s.grid.nx == 48);
  CHECK(s.particles.N == 4000);
  CHECK(s.diagnostics.krylov_deltas.size() == 3);
  CHECK(s.coefficients().name == "constant-diffusion");

  // The seed is not part of the hash; any other change is.
  auto t = s;
  t.seed = 6;
  CHECK(t.hash() == s.hash());
  t.particles.N = 4001;
  CHECK(t.hash() != s.hash());
  CHECK(parse_scenario(kMinimal).hash() == s.hash());
  CHECK(hex64(s.hash()).size() == 16);
}

TEST_CASE("scenario validation names the violated condition") {
  const std::string base = "[coefficients]\npreset = \"constant-diffusion\"\n";
  CHECK(error_of(base + "[grid]\nnxx = 3\n").find("unknown key 'grid.nxx'") != std::string::npos);
  CHECK(error_of("[coefficients]\npreset = \"nope\"\n").find("available: ") != std::string::npos);
  CHECK(error_of(base + "[coefficients.params]\nzeta = 1.0\n").find("zeta") != std::string::npos);
  CHECK(error_of("[coefficients\n").find("syntax error") != std::string::npos);
  CHECK(error_of(base + "[schedule]\nT = 1.0\nsnapshots = [2.0]\n").find("outside (0, T]") != std::string::npos);

  const auto krylov = error_of(base + "[diagnostics]\nkrylov = true\nkrylov_q0 = 1.2\nkrylov_p0 = [1.5, 1.5]\n");
  CHECK(krylov.find("2/q₀ + a·(1/p₀) < 2 − 2α₀") != std::string::npos);
  CHECK(error_of(base + "[diagnostics]\nkrylov = true\nkrylov_q0 = 3.0\n").find("1 − α₀ < 2/q₀") != std::string::npos);

  CHECK(error_of(base + "[exponents]\nq1 = 3.0\np1 = 6.0\n").find("2/q₁ + a·(1/p₁) < 1") != std::string::npos);
  CHECK(error_of(base + "[exponents]\nq1 = 3.0\np1 = 1.5\n").find("p₁ ∈ (2, ∞)^{2d}") != std::string::npos);
  // q1 >= 4 is only admitted without density dependence, and then needs the second condition.
  CHECK(error_of("[coefficients]\npreset = \"bounded-measurable\"\n[exponents]\nq1 = 5.0\np1 = 40.0\n")
            .find("q₁ ∈ (2, 4)") != std::string::npos);
  CHECK(error_of(base + "[exponents]\nq1 = 40.0\np1 = [20.0, 2.05]\n").find("1/p₁ < (1/2 − 1/q₁)·1") != std::string::npos);
  CHECK_NOTHROW(parse_scenario(base + "[exponents]\nq1 = 40.0\np1 = 20.0\n"));

  CHECK(error_of(base + "[diagnostics]\nbesov = true\nbesov_pairs = [[1.5, 1.2, 0.1]]\n").find("2/q < 1 + α") !=
        std::string::npos);
  CHECK(error_of(base + "[diagnostics]\nbesov = true\nbesov_pairs = [[2.0, 2.0, 0.1]]\n")
            .find("2/q + a·(1/p − 1) > 2α") != std::string::npos);
  CHECK_NOTHROW(parse_scenario(base + "[diagnostics]\nbesov = true\nbesov_pairs = [[2.0, 1.2, 0.1]]\n"));
}

TEST_CASE("free Gaussian moments") {
  const auto g = free_gaussian_moments({1.0, 2.0}, {0.5, 0.3}, 0.5, 2.0);
  CHECK(g.mean[0] == doctest::Approx(5.0));
  CHECK(g.var_v[0] == doctest::Approx(0.09 + 2.0));
  CHECK(g.cov_xv[0] == doctest::Approx(2 * 0.09 + 2.0));
  CHECK(g.var_x[0] == doctest::Approx(0.25 + 4 * 0.09 + 8.0 / 3.0));
  // The point-mass limit gives (2aT^3/3, aT^2, 2aT).
  const auto k = free_gaussian_moments({0, 0}, {1e-9, 1e-9}, 0.5, 1.0);
  CHECK(k.var_x[0] == doctest::Approx(1.0 / 3.0));
  CHECK(k.cov_xv[0] == doctest::Approx(0.5));
  CHECK(k.var_v[0] == doctest::Approx(1.0));
}

TEST_CASE("minimal run passes the Gaussian check and is deterministic") {
  const auto s = parse_scenario(kMinimal);
  const auto dir = scratch("minimal");
  const auto a = run_scenario(s, {dir / "a", std::nullopt, true});
  CHECK(a["schema_version"] == kReportSchemaVersion);
  CHECK(a["scenario"]["hash"] == hex64(s.hash()));
  CHECK(a["gaussian_check"]["applicable"].get<bool>());
  CHECK(a["gaussian_check"]["pass"].get<bool>());
  CHECK(a["grid"]["snapshots"].size() == 2);
  CHECK(a["grid"]["clip_mass"].get<double>() <= 1e-6);
  CHECK(a["particles"]["snapshots"][1]["l1_kde_grid"].get<double>() < 0.2);
  for (const char* f : {"report.json", "manifest.json", "grid_000.bin", "grid_001.bin", "particles_001.kmve", "kde_001.bin"})
    CHECK(fs::exists(dir / "a" / f));
  const auto rho = read_field(dir / "a" / "grid_001.bin");
  CHECK(rho.integral() == doctest::Approx(1.0).epsilon(1e-6));

  run_scenario(s, {dir / "b", std::nullopt, true});
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));

  const auto c = run_scenario(s, {dir / "c", 6, false});
  CHECK(c["seeds"]["master"] == 6);
  CHECK(c["particles"]["snapshots"][1] != a["particles"]["snapshots"][1]);
  CHECK(c["grid"] == a["grid"]);
}

TEST_CASE("report comparison") {
  const auto s = parse_scenario(kMinimal);
  const auto a = run_scenario(s, {{}, std::nullopt, false});
  const auto same = compare_reports(a, a);
  CHECK(same["identical"].get<bool>());
  CHECK(same["max_abs_delta"] == 0.0);
  for (const auto& [k, v] : same["deltas"].items()) CHECK(v.get<double>() == 0.0);

  auto b = a;
  b["grid"]["clip_mass"] = a["grid"]["clip_mass"].get<double>() + 0.5;
  b.erase("gaussian_check");
  const auto diff = compare_reports(a, b);
  CHECK_FALSE(diff["identical"].get<bool>());
  CHECK(diff["deltas"]["/grid/clip_mass"].get<double>() == doctest::Approx(0.5));
  CHECK(diff["mismatched"].size() == 1);

  b["schema_version"] = kReportSchemaVersion + 1;
  CHECK_THROWS_AS(compare_reports(a, b), ContractViolation);
}

TEST_CASE("halving the particle step halves the moment bias") {
  // Euler-Maruyama for dV = -V dt + sqrt(2) dW keeps Var V near 2 / (2 - dt) instead of 1.
  auto s = parse_scenario(R"(
seed = 3
[coefficients]
preset = "ornstein-uhlenbeck"
[grid]
enabled = false
[particles]
N = 200000
level = 8
dt = 0.2
[schedule]
T = 1.0
)");
  std::vector<nlohmann::json> reps;
  for (double dt : {0.2, 0.1, 0.05}) {
    s.particles.dt = dt;
    reps.push_back(run_scenario(s, {{}, std::nullopt, false}));
  }
  const std::string path = "/particles/snapshots/0/cov/1/1";
  const double d1 = compare_reports(reps[1], reps[0])["deltas"][path].get<double>();
  const double d2 = compare_reports(reps[2], reps[1])["deltas"][path].get<double>();
  MESSAGE("successive Var V deltas: " << d1 << ", " << d2);
  CHECK(d1 > 0.0);
  CHECK(d1 / d2 == doctest::Approx(2.0).epsilon(0.35));
}

TEST_CASE("diagnostics sections") {
  auto s = parse_scenario(R"(
seed = 11
[coefficients]
preset = "linear"
[initial]
stddev = [0.5, 0.5]
[grid]
nx = 48
nv = 96
half_x = 6.0
half_v = 6.0
[particles]
N = 2000
level = 8
dt = 0.05
[schedule]
T = 2.0
[diagnostics]
frames = 40
besov = true
besov_pairs = [[2.0, 1.2, 0.1]]
krylov = true
krylov_deltas = [0.125, 0.25, 0.5]
degiorgi = true
stability = true
stability_levels = [4, 8]
stability_N = 300
)");
  const auto r = run_scenario(s, {{}, std::nullopt, false});
  CHECK(r["besov"]["table"][0]["per_frame"].size() == 41);
  CHECK(r["besov"]["table"][0]["norm"].get<double>() > 0.0);
  CHECK(r["krylov"]["ratios"].size() == 3);
  CHECK(r["degiorgi"]["certificate"]["constants"].size() == 3);
  CHECK(r["degiorgi"]["certificate"]["scope"].get<std::string>().find("probed") != std::string::npos);
  CHECK(r["stability"]["per_seed"].size() == 3);
  CHECK(r["seeds"]["stability"].size() == 3);
  CHECK_FALSE(r["gaussian_check"]["applicable"].get<bool>());
}

TEST_CASE("command-line interface") {
  const auto dir = scratch("cli");
  {
    std::ofstream(dir / "ok.toml") << kMinimal;
    std::ofstream(dir / "bad.toml") << "[coefficients]\npreset = \"constant-diffusion\"\n[diagnostics]\nkrylov = true\n"
                                       "krylov_q0 = 1.2\nkrylov_p0 = [1.5, 1.5]\n";
    std::ofstream(dir / "cfl.toml") << "[coefficients]\npreset = \"constant-diffusion\"\n[grid]\ndt = 1.0\n"
                                       "[particles]\nenabled = false\n";
  }
  CHECK(cli("run \"" + (dir / "ok.toml").string() + "\" --out \"" + (dir / "out1").string() + "\" --threads 1",
            dir / "log1") == 0);
  CHECK(cli("run \"" + (dir / "ok.toml").string() + "\" --out \"" + (dir / "out2").string() + "\"", dir / "log2") == 0);
  CHECK(slurp(dir / "log1").find("gaussian moment check: pass") != std::string::npos);
  CHECK(slurp(dir / "out1" / "report.json") == slurp(dir / "out2" / "report.json"));

  CHECK(cli("run \"" + (dir / "bad.toml").string() + "\" --out \"" + (dir / "out3").string() + "\"", dir / "log3") == 2);
  CHECK(slurp(dir / "log3").find("2/q₀ + a·(1/p₀) < 2 − 2α₀") != std::string::npos);

  CHECK(cli("run \"" + (dir / "cfl.toml").string() + "\" --out \"" + (dir / "out4").string() + "\"", dir / "log4") == 3);
  CHECK(slurp(dir / "log4").find("numerical abort") != std::string::npos);

  CHECK(cli("compare \"" + (dir / "out1" / "report.json").string() + "\" \"" + (dir / "out2" / "report.json").string() +
                "\"",
            dir / "log5") == 0);
  const auto diff = nlohmann::json::parse(slurp(dir / "log5"));
  CHECK(diff["identical"].get<bool>());

  CHECK(cli("norms \"" + (dir / "out1" / "grid_001.bin").string() + "\" --s 0.1 --p 2", dir / "log6") == 0);
  const auto norms = nlohmann::json::parse(slurp(dir / "log6"));
  CHECK(norms["norm"].get<double>() > 0.0);
  CHECK(norms["difference_norm"].get<double>() > 0.0);

  CHECK(cli("run", dir / "log7") == 1);
}

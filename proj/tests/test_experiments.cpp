#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "pvlab/errors.hpp"
#include "pvlab/experiments.hpp"

using namespace pvlab;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

EnergyTrace synthetic(std::size_t n, std::uint64_t seed, double f, double hs) {
    EnergyTrace tr;
    tr.n = n;
    tr.seed = seed;
    for (int k = 0; k < 3; ++k) {
        TraceRow r;
        r.t = 0.5 * k;
        r.f_avg = f;
        r.hs_distance = hs;
        tr.rows.push_back(r);
    }
    return tr;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PVLAB_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("pvlab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config parsing") {
    const ExperimentConfig cfg = parse(R"(
[experiment]
scenario = disk_patch
N_list = 16, 32 64
seed = 7
T = 0.5
samples = 5
sampling = iid

[integrator]
method = rk4
dt = 0.01

[grid]
m = 128
L = 8

[field]
radius = 0.8
epsilon = 0.25

[diagnostics]
s = -3
angles = 64
radial = 128

[bounds]
C = 2
p = 4
)");
    CHECK(cfg.scenario == Scenario::disk_patch);
    CHECK(cfg.n_list == std::vector<std::size_t>{16, 32, 64});
    CHECK(cfg.seed == 7);
    CHECK(cfg.integrator.method == Method::rk4);
    CHECK(cfg.domain.m == 128);
    CHECK(cfg.hs.s == -3.0);
    CHECK(cfg.bounds.C == 2.0);
    CHECK(cfg.bounds.p == 4.0);
    CHECK(cfg.sampling == Sampling::iid);

    const nlohmann::json j = cfg.to_json();
    CHECK(j["experiment"]["scenario"] == "disk_patch");
    CHECK(j["grid"]["m"] == 128);
    CHECK(j["bounds"]["C"] == 2.0);

    // Defaults alone form a valid configuration.
    CHECK_NOTHROW(parse("[experiment]\nscenario = smooth_bump\n"));

    CHECK_THROWS_AS(parse("[experiment]\nscenaro = smooth_bump\n"), ConfigError);
    CHECK_THROWS_AS(parse("[extras]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nT = soon\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nT = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nN_list = \n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nN_list = 64, x\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nscenario = vortex_street\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nm = 100\n"), ConfigError);
    CHECK_THROWS_AS(parse("[diagnostics]\ns = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[bounds]\np = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nscenario = custom_field_file\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/pvlab.ini"), ConfigError);
}

TEST_CASE("trace csv round trip") {
    EnergyTrace tr = synthetic(64, 3, 0.25, 1e-3);
    tr.rows[1].close_pairs = 4;
    tr.rows[2].hs_distance = std::nan("");
    tr.error = "collision at t = 0.7";
    std::ostringstream os;
    tr.write_csv(os);
    const std::string text = os.str();
    CHECK(text.rfind("# schema pvlab-trace v1\n", 0) == 0);
    CHECK(text.find("t,pair_sum,cross,continuum,f_avg,H,M1,M2,I,min_dist,hs_distance,close_pairs,eps1,eps2,eps3,theorem_rhs\n") !=
          std::string::npos);

    std::istringstream is(text);
    const EnergyTrace back = EnergyTrace::read_csv(is);
    CHECK(back.n == 64);
    CHECK(back.seed == 3);
    REQUIRE(back.rows.size() == 3);
    CHECK(back.rows[1].close_pairs == 4);
    CHECK(back.rows[0].f_avg == 0.25);
    CHECK(std::isnan(back.rows[2].hs_distance));
    REQUIRE(back.error);
    CHECK(*back.error == "collision at t = 0.7");
    CHECK(back.summary()["status"] == "failed");

    std::istringstream bad("# schema pvlab-trace v1\nt,f\n1,2\n");
    CHECK_THROWS_AS(EnergyTrace::read_csv(bad), ConfigError);
    std::istringstream unversioned("t\n");
    CHECK_THROWS_AS(EnergyTrace::read_csv(unversioned), ConfigError);
}

TEST_CASE("log-log slopes and the convergence table") {
    CHECK(loglog_slope({64, 256, 1024}, {1.0 / 64, 1.0 / 256, 1.0 / 1024}) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(std::abs(loglog_slope({64, 256, 1024}, {1.0 / 64, 1.0 / 256, 1.0 / 1024}) + 1.0) <= 1e-10);
    CHECK(loglog_slope({1, 2, 4}, {3, 3, 3}) == 0.0);
    CHECK(std::isnan(loglog_slope({1, 2, 4}, {1, 0, 1})));
    CHECK_THROWS_AS(loglog_slope({2, 2}, {1, 3}), ParameterError);

    const BoundConfig bounds;
    std::vector<EnergyTrace> same;
    for (std::size_t n : {64u, 256u, 1024u}) same.push_back(synthetic(n, 1, 0.01, 0.002));
    const ConvergenceTable flat = convergence_table(same, bounds);
    CHECK(flat.slope_f0 == 0.0);
    CHECK(flat.slope_fT == 0.0);
    CHECK(flat.slope_hs == 0.0);

    std::vector<EnergyTrace> scaled;
    for (std::uint64_t seed : {1u, 2u})
        for (std::size_t n : {64u, 256u, 1024u})
            scaled.push_back(synthetic(n, seed, 1.0 / static_cast<double>(n), 1.0 / std::sqrt(static_cast<double>(n))));
    const ConvergenceTable t = convergence_table(scaled, bounds);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].runs == 2);
    CHECK(std::abs(t.slope_f0 + 1.0) <= 1e-10);
    CHECK(std::abs(t.slope_hs + 0.5) <= 1e-10);
    CHECK(t.theorem_C_by_seed.size() == 2);
    CHECK(t.theorem_C_spread == doctest::Approx(1.0));
    const CheckReport rep = convergence_checks(t);
    CHECK(rep.pass());
    CHECK(t.to_json()["rows"].size() == 3);

    std::vector<EnergyTrace> two(scaled.begin(), scaled.begin() + 2);
    CHECK_THROWS_AS(convergence_table(two, bounds), ParameterError);
    // Failed runs do not count toward the three values of N.
    scaled[2].error = "stiff";
    scaled[5].error = "stiff";
    CHECK_THROWS_AS(convergence_table(scaled, bounds), ParameterError);

    // Growing energies fail the ordering check.
    std::vector<EnergyTrace> rising;
    for (std::size_t n : {64u, 256u, 1024u}) rising.push_back(synthetic(n, 1, 1e-4 * static_cast<double>(n), 0.01));
    const CheckReport bad = convergence_checks(convergence_table(rising, bounds));
    CHECK_FALSE(bad.pass());
    CHECK_FALSE(bad.checks[0].pass);
}

TEST_CASE("hard-core sampling keeps the exclusion distance") {
    const Domain d{8.0, 128};
    const GridField b = polynomial_bump(d, 1.0);
    const std::size_t n = 300;
    const VortexState s = initial_vortices(b, n, 4, Sampling::hardcore, 0.5);
    REQUIRE(s.n() == n);
    const double r = 0.5 / std::sqrt(n * b.max_value());
    CHECK(min_pairwise_distance(s) >= r);
    const VortexState plain = initial_vortices(b, n, 4, Sampling::iid, 0.5);
    CHECK(plain.positions == sample_from_density(b, n, 4).positions);
    CHECK(initial_vortices(b, n, 4, Sampling::hardcore, 0.0).positions == plain.positions);
    CHECK(initial_vortices(b, n, 4, Sampling::hardcore, 0.5).positions == s.positions);
    // Random sequential packing of a flat disk jams well below N points at this exclusion.
    CHECK_THROWS_AS(initial_vortices(uniform_disk(d, 1.0), 2000, 4, Sampling::hardcore, 0.99), SamplingError);
}

TEST_CASE("two vortex scenario reproduces the co-rotation period") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::two_vortex;
    cfg.separation = 0.5;
    cfg.T = 4.0 * M_PI * M_PI * 0.25;
    cfg.samples = 65;
    cfg.integrator.tol = 1e-10;
    const auto traces = run_scenario(cfg, false);
    REQUIRE(traces.size() == 1);
    const EnergyTrace& tr = traces.front();
    REQUIRE(tr.ok());
    CHECK(tr.rows.size() == 65);
    CHECK(tr.extra["period"]["rel_error"].get<double>() <= 1e-6);
    CHECK(tr.extra["period"]["pass"].get<bool>());
    for (const auto& r : tr.rows) {
        CHECK(r.min_dist == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(std::isnan(r.f_avg));
    }
    cfg.samples = 3;
    CHECK_FALSE(run_scenario(cfg, false).front().ok());
}

TEST_CASE("disk patch runs are byte-identical and fully populated") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::disk_patch;
    cfg.n_list = {64};
    cfg.T = 1.0;
    cfg.samples = 9;
    cfg.hs.angles = 64;
    cfg.hs.radial = 128;
    const auto dir = scratch_dir("determinism");
    cfg.output_dir = (dir / "a").string();
    run_scenario(cfg, true);
    cfg.output_dir = (dir / "b").string();
    const auto traces = run_scenario(cfg, true);
    const std::string a = slurp(dir / "a" / "trace_N64_seed1.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(dir / "b" / "trace_N64_seed1.csv"));

    REQUIRE(traces.front().ok());
    const auto& rows = traces.front().rows;
    REQUIRE(rows.size() == 9);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const TraceRow& r = rows[k];
        if (k) CHECK(r.t > rows[k - 1].t);
        CHECK(r.f_avg == doctest::Approx(r.pair_sum + r.cross + r.continuum).epsilon(1e-14));
        CHECK(r.hs_distance > 0.0);
        CHECK(r.eps1 > 0.0);
        CHECK(2 * r.eps1 < r.eps2);
        CHECK(r.eps2 < r.eps3);
        CHECK(r.theorem_rhs >= 0.0);
        CHECK(r.min_dist > 0.0);
    }
    CHECK(rows.front().theorem_rhs == doctest::Approx(std::abs(rows.front().f_avg)));

    std::ifstream js(dir / "a" / "trace_N64_seed1.json");
    const nlohmann::json j = nlohmann::json::parse(js);
    CHECK(j["status"] == "ok");
    CHECK(j["config"]["experiment"]["scenario"] == "disk_patch");
    CHECK(j["floor_respected"].get<bool>());
    CHECK(j["conservation"]["H_rel_drift"].get<double>() < 1e-6);
    std::filesystem::remove_all(dir);
}

TEST_CASE("stress-energy check of a vanishing field is exact") {
    const Domain d{8.0, 128};
    const GridField b = polynomial_bump(d, 1.0);
    const auto [lhs, rhs] = se_divergence_check(VectorField(d), b, bump_mixture(d, {{{0.3, 0.0}, 0.5, 1.0, 8}}));
    CHECK(lhs == 0.0);
    CHECK(rhs == 0.0);
}

TEST_CASE("identity verification passes and catches a corrupted sign") {
    ExperimentConfig cfg;
    const CheckReport good = verify_identities(cfg);
    for (const auto& c : good.checks) MESSAGE(c.name << " measured " << c.measured << " pass " << c.pass);
    REQUIRE(good.checks.size() == 5);
    CHECK(good.checks[0].pass);
    CHECK(good.checks[1].pass);
    CHECK(good.checks[2].pass);
    CHECK(good.checks[3].pass);
    CHECK(good.to_json()["checks"].size() == 5);

    cfg.corrupt_sign = true;
    const CheckReport bad = verify_identities(cfg);
    CHECK_FALSE(bad.checks[0].pass);
    CHECK_FALSE(bad.pass());
}

TEST_CASE("command line exit codes") {
    const auto dir = scratch_dir("cli");
    {
        std::ofstream os(dir / "bad.ini");
        os << "[experiment]\nscenario = smooth_bump\ncolour = blue\n";
    }
    {
        std::ofstream os(dir / "pair.ini");
        os << "[experiment]\nscenario = two_vortex\nT = 2\nsamples = 65\n[integrator]\ntol = 1e-10\n";
    }
    CHECK(run_cli("simulate --config " + (dir / "bad.ini").string()) == 2);
    CHECK(run_cli("simulate --config " + (dir / "missing.ini").string()) == 2);
    CHECK(run_cli("bogus") == 2);
    CHECK(run_cli("simulate --config " + (dir / "pair.ini").string() + " --out " + (dir / "out").string() +
                  " --seed 5") == 0);
    CHECK(std::filesystem::exists(dir / "out" / "trace_N2_seed5.csv"));
    CHECK(run_cli("converge --config " + (dir / "pair.ini").string()) == 2);
    std::filesystem::remove_all(dir);
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pvlab/bounds.hpp"
#include "pvlab/euler_field.hpp"
#include "pvlab/grid.hpp"
#include "pvlab/modulated_energy.hpp"
#include "pvlab/vortex_dynamics.hpp"

namespace pvlab {

enum class Scenario { two_vortex, disk_patch, smooth_bump, custom_field_file };
// iid: independent draws. hardcore: draws closer than exclusion / sqrt(N max omega)
// to an accepted point are discarded.
enum class Sampling { iid, hardcore };

std::string to_string(Scenario s);
std::string to_string(Sampling s);

struct ExperimentConfig {
    Scenario scenario = Scenario::smooth_bump;
    std::vector<std::size_t> n_list{64, 256, 1024};
    std::uint64_t seed = 1;
    std::size_t seeds = 1;  // the converge command runs seed, seed + 1, ...
    double T = 1.0;
    std::size_t samples = 33;
    std::string output_dir = "pvlab_out";
    Sampling sampling = Sampling::hardcore;
    double exclusion = 0.5;

    IntegratorSpec integrator{Method::rk45, 1e-3, 1e-8, 0.0};
    Domain domain{8.0, 256};

    double radius = 1.0;      // disk or bump radius
    int power = 8;            // bump exponent
    double epsilon = 0.125;   // disk mollification width
    std::string field_file;   // custom_field_file input

    HsOptions hs{};
    double eps1 = 0.05;       // radius cap of the truncation vector in the summary diagnostics

    BoundConfig bounds{};     // omega_inf and omega_p are measured from the initial field

    double separation = 0.5;  // two_vortex

    std::size_t verify_n = 32;
    std::int64_t verify_m = 512;
    double verify_h = 1e-3;
    bool corrupt_sign = false;

    void validate() const;
    nlohmann::json to_json() const;
};

// Sectioned key = value text; unknown sections or keys raise ConfigError.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);

struct TraceRow {
    double t = 0.0;
    double pair_sum = 0.0, cross = 0.0, continuum = 0.0, f_avg = 0.0;
    double H = 0.0, M1 = 0.0, M2 = 0.0, I = 0.0, min_dist = 0.0;
    double hs_distance = 0.0;
    double close_pairs = 0.0;
    double eps1 = 0.0, eps2 = 0.0, eps3 = 0.0;
    double theorem_rhs = 0.0;
};

inline constexpr const char* kTraceSchema = "pvlab-trace v1";
const std::vector<std::string>& trace_columns();

struct EnergyTrace {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<TraceRow> rows;
    std::optional<std::string> error;  // set when the run aborted
    StepStats stats;
    double wall_seconds = 0.0;
    nlohmann::json extra;  // scenario-specific summary entries

    bool ok() const noexcept { return !error.has_value(); }
    void write_csv(std::ostream& os) const;
    static EnergyTrace read_csv(std::istream& is);
    nlohmann::json summary() const;
};

// Initial vorticity of a sampled scenario.
GridField initial_field(const ExperimentConfig& cfg);
VortexState initial_vortices(const GridField& field, std::size_t n, std::uint64_t seed, Sampling sampling,
                             double exclusion);

// Reference vorticity at the sample times, restricted to B(0, L/4), with cached diagnostics.
struct FieldTrajectory {
    std::vector<double> times;
    std::vector<GridField> fields;
    std::vector<double> coulomb;
    std::vector<PolarSpectrum> spectra;
    double omega_inf = 0.0;
    double omega_p = 0.0;
    double masked_mass = 0.0;  // largest |mass| zeroed outside B(0, L/4) at any sample
};
FieldTrajectory evolve_field(const ExperimentConfig& cfg);

// One N of a sampled scenario against a precomputed reference trajectory.
EnergyTrace run_vortices(const ExperimentConfig& cfg, const FieldTrajectory& ref, std::size_t n,
                         std::uint64_t seed);
EnergyTrace run_two_vortex(const ExperimentConfig& cfg);

// All N of the configured scenario; writes trace_N<n>_seed<s>.csv and .json into
// output_dir when write is set.
std::vector<EnergyTrace> run_scenario(const ExperimentConfig& cfg, bool write = true);
std::vector<EnergyTrace> run_scenario(const ExperimentConfig& cfg, const FieldTrajectory& ref, bool write);

struct ConvergenceRow {
    std::size_t n = 0;
    std::size_t runs = 0;
    double f0 = 0.0;             // seed mean of |F(0)|
    double fT = 0.0;             // seed mean of |F(T)|
    double sup_hs = 0.0;         // seed mean of the sup over samples
    double corollary_rhs = 0.0;  // with C = 1 at the mean |F(0)|
    double fitted_C = 0.0;       // largest per-seed theorem constant
    double fitted_C_s = 0.0;     // largest sup_hs / corollary_rhs
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;  // ascending N
    double slope_f0 = 0.0, slope_fT = 0.0, slope_hs = 0.0;
    std::vector<double> theorem_C_by_seed;  // max over N, one per seed, ascending seed
    double theorem_C_spread = 1.0;          // max / min of the per-seed constants
    nlohmann::json to_json() const;
    void write_csv(std::ostream& os) const;
};

// Least-squares slope of ln y against ln x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);
// Needs at least three distinct N among the successful traces.
ConvergenceTable convergence_table(const std::vector<EnergyTrace>& traces, const BoundConfig& bounds);

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    nlohmann::json detail;
};

struct CheckReport {
    std::vector<CheckResult> checks;
    bool pass() const;
    nlohmann::json to_json() const;
};

// Energy ordering in N, Sobolev-distance ordering and rate, theorem constant stability.
CheckReport convergence_checks(const ConvergenceTable& table);

// Finite-difference energy derivative, stress-energy identity and renormalization limit.
CheckReport verify_identities(const ExperimentConfig& cfg);

}  // namespace pvlab

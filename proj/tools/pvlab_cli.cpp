#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pvlab/errors.hpp"
#include "pvlab/experiments.hpp"

using namespace pvlab;

namespace {

constexpr int kPass = 0;
constexpr int kCheckFailure = 1;
constexpr int kConfigError = 2;

struct CommonArgs {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config, "experiment config file")->required();
    cmd->add_option("--out", a.out, "output directory (overrides experiment.output_dir)");
    cmd->add_option("--seed", a.seed, "random seed (overrides experiment.seed)");
}

ExperimentConfig resolve(const CommonArgs& a) {
    ExperimentConfig cfg = load_config(a.config);
    if (a.out) cfg.output_dir = *a.out;
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    return cfg;
}

void write_json(const ExperimentConfig& cfg, const std::string& name, const nlohmann::json& j) {
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = std::filesystem::path(cfg.output_dir) / name;
    const auto tmp = std::filesystem::path(cfg.output_dir) / (name + ".tmp");
    {
        std::ofstream os(tmp);
        if (!os) throw ConfigError("cannot write " + tmp.string());
        os << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

void print_checks(const CheckReport& rep) {
    for (const auto& c : rep.checks)
        std::printf("%-44s %s  measured %.4g  tolerance %.4g\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.measured,
                    c.tolerance);
}

int cmd_simulate(const CommonArgs& a) {
    const ExperimentConfig cfg = resolve(a);
    const auto traces = run_scenario(cfg, true);
    bool ok = true;
    for (const auto& tr : traces) {
        const auto s = tr.summary();
        if (!tr.ok()) {
            ok = false;
            std::printf("N %zu seed %llu FAILED: %s\n", tr.n, static_cast<unsigned long long>(tr.seed), tr.error->c_str());
            continue;
        }
        if (s.contains("period")) {
            const bool pass = s["period"]["pass"].get<bool>();
            ok = ok && pass;
            std::printf("two vortex period: analytic %.12g measured %.12g rel %.3g %s\n",
                        s["period"]["analytic"].get<double>(), s["period"]["measured"].get<double>(),
                        s["period"]["rel_error"].get<double>(), pass ? "PASS" : "FAIL");
        } else {
            const bool floor_ok = s["floor_respected"].get<bool>();
            ok = ok && floor_ok;
            std::printf("N %zu seed %llu  F(0) %.6g  F(T) %.6g  sup Hs %.6g  %.1fs%s\n", tr.n,
                        static_cast<unsigned long long>(tr.seed), s["f_avg_initial"].get<double>(),
                        s["f_avg_final"].get<double>(), s["sup_hs_distance"].get<double>(), tr.wall_seconds,
                        floor_ok ? "" : "  distance floor violated");
        }
    }
    return ok ? kPass : kCheckFailure;
}

int cmd_energy(const CommonArgs& a) {
    const ExperimentConfig cfg = resolve(a);
    const GridField w = initial_field(cfg);
    nlohmann::json out;
    out["config"] = cfg.to_json();
    out["reports"] = nlohmann::json::array();
    for (std::size_t n : cfg.n_list) {
        const VortexState s = initial_vortices(w, n, cfg.seed, cfg.sampling, cfg.exclusion);
        const EnergyReport r = f_n_avg(s, w, TruncationVector::uniform(n, cfg.eps1));
        std::printf("N %zu  F_avg %.8g  renormalized %.8g (eta %.3g)\n", n, r.f_avg, *r.renormalized, cfg.eps1);
        out["reports"].push_back(r.to_json());
    }
    write_json(cfg, "energy_seed" + std::to_string(cfg.seed) + ".json", out);
    return kPass;
}

int cmd_verify(const CommonArgs& a) {
    const ExperimentConfig cfg = resolve(a);
    const CheckReport rep = verify_identities(cfg);
    print_checks(rep);
    nlohmann::json j = rep.to_json();
    j["config"] = cfg.to_json();
    write_json(cfg, "verify_seed" + std::to_string(cfg.seed) + ".json", j);
    return rep.pass() ? kPass : kCheckFailure;
}

int cmd_converge(const CommonArgs& a) {
    ExperimentConfig cfg = resolve(a);
    if (cfg.scenario == Scenario::two_vortex) throw ConfigError("converge needs a sampled scenario");
    const FieldTrajectory ref = evolve_field(cfg);
    std::vector<EnergyTrace> all;
    const std::uint64_t first = cfg.seed;
    for (std::size_t k = 0; k < cfg.seeds; ++k) {
        cfg.seed = first + k;
        for (auto& tr : run_scenario(cfg, ref, true)) {
            std::printf("N %zu seed %llu %s %.1fs\n", tr.n, static_cast<unsigned long long>(tr.seed),
                        tr.ok() ? "ok" : tr.error->c_str(), tr.wall_seconds);
            all.push_back(std::move(tr));
        }
    }
    cfg.seed = first;
    BoundConfig bounds = cfg.bounds;
    bounds.omega_inf = ref.omega_inf;
    bounds.omega_p = ref.omega_p;
    const ConvergenceTable table = convergence_table(all, bounds);
    const CheckReport rep = convergence_checks(table);
    print_checks(rep);
    nlohmann::json j;
    j["table"] = table.to_json();
    j["checks"] = rep.to_json();
    j["config"] = cfg.to_json();
    write_json(cfg, "convergence.json", j);
    {
        std::ofstream os(std::filesystem::path(cfg.output_dir) / "convergence.csv");
        table.write_csv(os);
    }
    bool runs_ok = true;
    for (const auto& tr : all) runs_ok = runs_ok && tr.ok();
    return rep.pass() && runs_ok ? kPass : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-vortex mean-field experiments"};
    app.require_subcommand(1);
    CommonArgs args;
    auto* simulate = app.add_subcommand("simulate", "run the scenario for every N and write traces");
    auto* energy = app.add_subcommand("energy", "modulated energy of the initial configurations");
    auto* verify = app.add_subcommand("verify", "derivative, stress-energy and renormalization checks");
    auto* converge = app.add_subcommand("converge", "multi-seed sweep over N with convergence checks");
    for (auto* c : {simulate, energy, verify, converge}) add_common(c, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kConfigError;
    }

    try {
        if (*simulate) return cmd_simulate(args);
        if (*energy) return cmd_energy(args);
        if (*verify) return cmd_verify(args);
        return cmd_converge(args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kCheckFailure;
    }
}

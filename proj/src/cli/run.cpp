#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kmp/cli.hpp"
#include "kmp/csv.hpp"

namespace kmp {

namespace fs = std::filesystem;

bool RunOutcome::pass() const {
    return std::all_of(reports.begin(), reports.end(), [](const PipelineReport& r) { return r.pass(); });
}

namespace {

std::shared_ptr<spdlog::logger> make_logger(const fs::path& dir, int verbosity) {
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir / "run.log").string(), true);
    file->set_level(verbosity >= 2 ? spdlog::level::debug : spdlog::level::info);
    file->set_pattern("%Y-%m-%dT%H:%M:%S.%e %l %v");
    auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
    console->set_level(verbosity >= 2 ? spdlog::level::debug : verbosity == 1 ? spdlog::level::info : spdlog::level::warn);
    console->set_pattern("%l: %v");
    auto log = std::make_shared<spdlog::logger>("kmpctl", spdlog::sinks_init_list{file, console});
    log->set_level(spdlog::level::debug);
    log->flush_on(spdlog::level::info);
    return log;
}

void write_table(const fs::path& dir, const Table& t) {
    std::ofstream out(dir / (t.name + ".csv"));
    CsvWriter csv(out);
    csv.header(t.columns);
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
    if (!out) throw std::runtime_error("cannot write " + (dir / (t.name + ".csv")).string());
}

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

EnergyState duality_start(const RunConfig& c, const Environment& env) {
    const auto& dom = env.domain();
    EnergyState xi0;
    if (!c.duality->xi0.empty()) {
        if (static_cast<int>(c.duality->xi0.size()) != dom.interior_count())
            throw ConfigError("pipelines.duality.xi0", "needs one entry per interior site (" +
                                                           std::to_string(dom.interior_count()) + ")");
        xi0.xi = c.duality->xi0;
    } else {
        for (int i = 0; i < dom.interior_count(); ++i)
            xi0.xi.push_back(0.5 * env.omega(i) * (*c.duality->initial)(dom.interior_position(i)));
    }
    for (double x : xi0.xi)
        if (!(x >= 0)) throw ConfigError("pipelines.duality", "initial energies must be nonnegative");
    return xi0;
}

}  // namespace

RunOutcome run(const RunConfig& config, int verbosity) {
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    auto log = make_logger(dir, verbosity);
    const auto hash = config_hash(config);
    log->info("config sha256 {}", hash);
    log->info("seed {} replicas {} workers {}", config.seed, config.replicas, config.workers);
    {
        std::ofstream out(dir / "config.resolved.yaml");
        out << canonical_config(config);
    }

    auto env = build_environment(config);
    log->info("environment {} d={} L={} sites={} edges={}", config.environment_kind, env.domain().dim(),
              env.domain().scale(), env.domain().interior_count(), env.domain().edges().size());
    const ReplicaPlan plan{config.seed, config.replicas, config.workers};

    RunOutcome outcome;
    auto timed = [&](const char* name, auto&& fn) {
        log->info("pipeline {} started", name);
        const auto t0 = std::chrono::steady_clock::now();
        outcome.reports.push_back(fn());
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const auto& rep = outcome.reports.back();
        for (const auto& g : rep.gates) {
            if (g.pass) log->debug("  {} PASS value={} bound={}", g.name, g.value, g.threshold);
            else log->warn("  {} FAIL value={} bound={} ({})", g.name, g.value, g.threshold, g.detail);
        }
        log->info("pipeline {} {} in {:.2f} s", name, rep.pass() ? "passed" : "FAILED", sec);
    };

    if (config.duality) {
        DualityParams p;
        p.times = config.duality->times;
        p.sigmas = config.duality->sigmas;
        p.xi0 = duality_start(config, env);
        for (const auto& set : config.duality->particle_sets) {
            std::vector<int> sites;
            for (const auto& coord : set) {
                const int s = env.domain().interior_index(coord);
                if (s < 0) throw ConfigError("pipelines.duality.particles", "site is not in the interior");
                sites.push_back(s);
            }
            p.particle_sets.push_back(sites);
        }
        timed("duality", [&] { return run_duality(env, p, plan); });
    }
    if (config.steady_state) {
        auto p = *config.steady_state;
        p.plan.replicas = plan;
        timed("steady_state", [&] { return run_steady_state(env, p); });
    }
    if (config.hydro) {
        HydroParams p{config.hydro->t, config.hydro->probes, config.hydro->initial, config.hydro->h, config.hydro->tolerance};
        timed("hydro", [&] { return run_hydro(*config.scenario, env, p, plan); });
    }
    if (config.absorption) timed("absorption", [&] { return run_absorption(env, *config.absorption); });
    if (config.drift_signs) timed("drift_signs", [&] { return run_drift_signs(env); });
    if (config.equilibrium) {
        auto p = *config.equilibrium;
        p.plan.replicas = plan;
        timed("equilibrium", [&] { return run_equilibrium(env, p); });
    }

    nlohmann::ordered_json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["config_sha256"] = hash;
    summary["seed"] = config.seed;
    summary["replicas"] = config.replicas;
    summary["environment"] = {{"kind", config.environment_kind}, {"dim", env.domain().dim()}, {"L", env.domain().scale()}};
    summary["pipelines"] = nlohmann::ordered_json::object();
    for (const auto& rep : outcome.reports) {
        for (const auto& t : rep.tables) write_table(dir, t);
        nlohmann::ordered_json j;
        j["status"] = rep.pass() ? "PASS" : "FAIL";
        j["gates"] = nlohmann::ordered_json::array();
        for (const auto& g : rep.gates)
            j["gates"].push_back({{"name", g.name}, {"status", g.pass ? "PASS" : "FAIL"}, {"value", number(g.value)},
                                  {"threshold", number(g.threshold)}, {"detail", g.detail}});
        j["metrics"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : rep.metrics) j["metrics"][k] = number(v);
        if (rep.pipeline == "duality") {
            j["cells"] = nlohmann::ordered_json::array();
            for (const auto& row : rep.tables.front().rows)
                j["cells"].push_back({{"particles", row[0]}, {"t", std::stod(row[2])}, {"lhs", std::stod(row[3])},
                                      {"lhs_stderr", std::stod(row[4])}, {"rhs", std::stod(row[5])},
                                      {"rhs_stderr", std::stod(row[6])}, {"status", row[10]}});
        }
        summary["pipelines"][rep.pipeline] = j;
    }
    summary["status"] = outcome.pass() ? "PASS" : "FAIL";
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
    log->info("overall {}", outcome.pass() ? "PASS" : "FAIL");
    spdlog::drop("kmpctl");
    return outcome;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Simulation and exact analysis of inhomogeneous KMP-type energy-exchange models"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> output_dir;
    int verbosity = 0;

    auto* run_cmd = app.add_subcommand("run", "run the pipelines of a configuration file");
    run_cmd->add_option("-c,--config", config_path, "configuration file (YAML)")->required();
    run_cmd->add_option("-s,--seed", seed, "override the master seed");
    run_cmd->add_option("-w,--workers", workers, "override the worker thread count (0 = all cores)");
    run_cmd->add_option("-o,--output-dir", output_dir, "override the output directory");
    run_cmd->add_flag("-v,--verbose", verbosity, "more console output (repeatable)");
    auto* cat_cmd = app.add_subcommand("scenarios", "list the built-in scenario kinds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config_error;
    }

    if (cat_cmd->parsed()) {
        std::cout << scenario_catalog_text();
        return exit_pass;
    }
    try {
        auto config = load_config(config_path, Overrides{seed, workers, output_dir});
        auto outcome = run(config, verbosity);
        for (const auto& rep : outcome.reports) std::cout << rep.pipeline << ": " << (rep.pass() ? "PASS" : "FAIL") << '\n';
        return outcome.pass() ? exit_pass : exit_gate_failure;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const ConstructionError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return exit_runtime_error;
    }
}

}  // namespace kmp

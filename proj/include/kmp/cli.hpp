#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "kmp/environment.hpp"
#include "kmp/pipelines.hpp"

namespace kmp {

/// Invalid configuration; `field` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string field, const std::string& message, int line = -1);
    const std::string& field() const { return field_; }
    int line() const { return line_; }

  private:
    std::string field_;
    int line_;
};

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { exit_pass = 0, exit_gate_failure = 1, exit_config_error = 2, exit_runtime_error = 3 };

struct RunConfig {
    YAML::Node tree;  // resolved configuration, overrides applied
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::size_t replicas = 1000;
    std::string output_dir = "out";

    std::string environment_kind;  // a scenario kind, "chain" or "iid_chain"
    std::optional<ScenarioSpec> scenario;
    int dim = 1;
    int L = 0;
    Box box;
    // explicit and random chains
    std::vector<int> chain_omega;
    std::vector<double> chain_rates;
    std::vector<int> omega_choices;
    double rate_lo = 0.0;
    double rate_hi = 0.0;
    double T0 = 0.0;
    double T1 = 0.0;

    struct Duality {
        std::vector<double> times;
        std::vector<std::vector<std::vector<int>>> particle_sets;  // set -> particle -> lattice coordinate
        std::optional<ScalarField> initial;
        std::vector<double> xi0;
        double sigmas = 3.0;
    };
    struct Hydro {
        double t = 0.1;
        std::vector<std::vector<double>> probes;
        ScalarField initial = ScalarField::constant(1.0);
        double h = 1.0 / 64;
        double tolerance = 0.05;
    };

    std::optional<Duality> duality;
    std::optional<SteadyStateParams> steady_state;
    std::optional<Hydro> hydro;
    std::optional<AbsorptionParams> absorption;
    bool drift_signs = false;
    std::optional<EquilibriumParams> equilibrium;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> output_dir;
};

RunConfig parse_config(const std::string& text, const Overrides& overrides = {});
RunConfig load_config(const std::string& path, const Overrides& overrides = {});

/// Canonical text of the resolved configuration and its SHA-256.
std::string canonical_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);

Environment build_environment(const RunConfig& config);

struct RunOutcome {
    std::vector<PipelineReport> reports;
    bool pass() const;
};

/// Runs every configured pipeline and writes <table>.csv files, summary.json,
/// config.resolved.yaml and run.log into the output directory.
/// verbosity: 0 warnings, 1 info, 2 debug on stderr; the log file is always at info or finer.
RunOutcome run(const RunConfig& config, int verbosity = 0);

/// Built-in scenario kinds with their regimes and parameter schemas.
std::string scenario_catalog_text();

/// Full command-line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace kmp

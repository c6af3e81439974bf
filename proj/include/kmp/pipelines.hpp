#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kmp/absorption.hpp"
#include "kmp/dual.hpp"
#include "kmp/environment.hpp"
#include "kmp/stats.hpp"

namespace kmp {

/// One pass/fail check with the measured value and the bound it was held to.
struct Gate {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

/// Preformatted table; numeric cells carry 17 significant digits.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    template <class... Ts>
    void add(const Ts&... values) {
        rows.push_back({cell(values)...});
    }
    static std::string cell(double v);
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long v) { return std::to_string(v); }
    static std::string cell(unsigned long v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "PASS" : "FAIL"; }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }
};

struct PipelineReport {
    std::string pipeline;
    std::vector<Gate> gates;
    std::vector<Table> tables;
    std::vector<std::pair<std::string, double>> metrics;

    bool pass() const;
};

struct DualityParams {
    std::vector<double> times;                    // micro times
    std::vector<std::vector<int>> particle_sets;  // interior site indices, one entry per particle
    EnergyState xi0;
    double sigmas = 3.0;
};

/// Both sides of the duality relation per (particle set, time); single
/// particles are also checked against the exact transient law.
PipelineReport run_duality(const Environment& env, const DualityParams& params, const ReplicaPlan& plan);

struct SteadyStateParams {
    SteadyStatePlan plan;
    ScalarField initial = ScalarField::constant(1.0);
    std::vector<double> probes;  // macroscopic points in (0,1)
    double mean_tolerance = 0.02;
    double sigmas = 3.0;
    bool moment_gates = true;
    int bulk_lo = -1;  // site range for the adjacent covariance; -1 picks the middle half
    int bulk_hi = -1;
};

/// One-dimensional chains only: time-averaged site means against
/// (omega_m/2) u^(L)(m/L), probe marginals (moments, KS) and the adjacent
/// covariance in the bulk.
PipelineReport run_steady_state(const Environment& env, const SteadyStateParams& params);

struct HydroParams {
    double t = 0.1;
    std::vector<std::vector<double>> probes;
    ScalarField initial = ScalarField::constant(1.0);
    double h = 1.0 / 64;
    double tolerance = 0.05;
};

PipelineReport run_hydro(const ScenarioSpec& spec, const Environment& env, const HydroParams& params,
                         const ReplicaPlan& plan);

struct AbsorptionParams {
    std::vector<double> points{0.25, 0.5, 0.75};
    BoundaryConvention convention = BoundaryConvention::literal;
    double ratio_tolerance = 0.02;
    bool pair = true;
    double pair_tolerance = 0.05;
    double marginal_tolerance = 1e-9;
};

/// Exact one- and two-particle absorption on a chain against A^(L).
PipelineReport run_absorption(const Environment& env, const AbsorptionParams& params);

/// Generator-exact and printed drifts at every admissible interior site.
PipelineReport run_drift_signs(const Environment& env);

struct EquilibriumParams {
    InvariancePlan plan;
    double sigmas = 3.0;
};

PipelineReport run_equilibrium(const Environment& env, const EquilibriumParams& params);

}  // namespace kmp

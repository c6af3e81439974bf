// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance [--quick] [--only N] [--workers W] [--report FILE]
// --quick shrinks replica counts and runs the hydrodynamic check at L=16; it
// is a smoke variant, the full run is what ctest executes.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "kmp/cli.hpp"
#include "kmp/dual.hpp"
#include "kmp/pde.hpp"
#include "kmp/pipelines.hpp"
#include "kmp/replicas.hpp"
#include "kmp/stats.hpp"
#include "kmp/steady1d.hpp"

using namespace kmp;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Settings {
    bool quick = false;
    unsigned workers = 1;
    std::size_t scale(std::size_t full) const { return quick ? std::max<std::size_t>(full / 10, 2) : full; }
};

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

std::string failed_gates(const PipelineReport& rep) {
    std::string out;
    for (const auto& g : rep.gates)
        if (!g.pass) out += " [" + g.name + ": " + fmt(g.value) + " > " + fmt(g.threshold) + "]";
    return out;
}

double metric(const PipelineReport& rep, const std::string& name) {
    for (const auto& [k, v] : rep.metrics)
        if (k == name) return v;
    return std::nan("");
}

Environment random_chain(int L, double T0, double T1, std::uint64_t draw) {
    RngStream rng(kSeed, stream_id(StreamPurpose::environment, draw));
    const std::vector<int> omegas{1, 2, 3};
    return make_iid_chain(L, omegas, 0.5, 2.0, T0, T1, rng);
}

// 2D box (0,1)^2 at L=4 with omega in {1,2,3}, rates on [0.5, 2] and a tilted bath.
Environment random_box(std::uint64_t draw) {
    LatticeDomain dom(4, Box{{0.0, 0.0}, {1.0, 1.0}});
    RngStream rng(kSeed, stream_id(StreamPurpose::environment, draw));
    std::uniform_int_distribution<int> pick(1, 3);
    std::uniform_real_distribution<double> rate(0.5, 2.0);
    std::vector<int> omega(dom.interior_count());
    for (auto& w : omega) w = pick(rng);
    std::vector<double> rates(dom.edges().size());
    for (auto& r : rates) r = rate(rng);
    std::vector<double> bath(dom.boundary_count());
    for (int b = 0; b < dom.boundary_count(); ++b) {
        auto x = dom.boundary_position(b);
        bath[b] = 1.0 + x[0] + 0.5 * x[1];
    }
    return Environment(std::move(dom), std::move(omega), std::move(rates), std::move(bath));
}

Verdict duality(const Settings& s) {
    const std::vector<double> times{0.5, 2.0, 10.0};
    const ReplicaPlan plan{kSeed, s.scale(100000), s.workers};
    auto field = ScalarField::affine(0.5, {2.0, -0.5});

    struct Case {
        std::string name;
        Environment env;
        std::vector<std::vector<int>> sets;
    };
    const std::vector<int> chain_omega{1, 3, 2};
    const std::vector<double> chain_rates{0.5, 1.5, 1.0, 2.0};
    std::vector<Case> cases;
    cases.push_back({"chain", make_chain(chain_omega, chain_rates, 1.0, 2.0), {{1}, {0}, {1, 1}, {0, 2}, {1, 1, 1}, {0, 1, 2}}});
    auto box = random_box(100);
    const int centre = box.domain().nearest_interior(std::vector<double>{0.5, 0.5});
    const int corner = box.domain().nearest_interior(std::vector<double>{0.25, 0.25});
    cases.push_back({"box", std::move(box), {{centre}, {corner}, {centre, centre}, {corner, centre}, {centre, centre, centre}, {corner, corner, centre}}});

    Verdict v{true, ""};
    for (const auto& c : cases) {
        DualityParams p;
        p.times = times;
        p.particle_sets = c.sets;
        for (int i = 0; i < c.env.domain().interior_count(); ++i)
            p.xi0.xi.push_back(0.5 * c.env.omega(i) * field(c.env.domain().interior_position(i)));
        auto rep = run_duality(c.env, p, plan);
        v.pass = v.pass && rep.pass();
        v.detail += c.name + " max z " + fmt(metric(rep, "max_z"), 3) + " over " + std::to_string(rep.gates.size()) +
                    " checks" + failed_gates(rep) + "; ";
    }
    return v;
}

Verdict equilibrium(const Settings& s) {
    auto env = random_chain(16, 1.0, 1.0, 200);
    EquilibriumParams p;
    p.plan.checkpoints = {0.0, 32.0, 128.0, 256.0, 512.0};
    p.plan.max_order = 3;
    p.plan.replicas = ReplicaPlan{kSeed, s.scale(100000), s.workers};
    auto rep = run_equilibrium(env, p);
    return {rep.pass(), "max z " + fmt(metric(rep, "max_z"), 3) + ", " + fmt(metric(rep, "exceedances")) +
                            " of " + fmt(metric(rep, "comparisons")) + " comparisons beyond 3 stderr"};
}

Verdict steady_state(const Settings& s) {
    auto params = [&](std::size_t replicas) {
        SteadyStateParams p;
        p.initial = ScalarField::constant(1.5);
        p.probes = {0.25, 0.5, 0.75};
        p.moment_gates = false;
        p.plan.replicas = ReplicaPlan{kSeed, replicas, s.workers};
        return p;
    };
    auto big = run_steady_state(random_chain(64, 1.0, 2.0, 300), params(s.scale(64)));
    auto small = run_steady_state(random_chain(16, 1.0, 2.0, 301), params(s.scale(256)));
    const double c64 = metric(big, "adjacent_covariance"), c16 = metric(small, "adjacent_covariance");
    const bool shrinks = std::abs(c64) < std::abs(c16);
    return {big.pass() && shrinks,
            "max mean error " + fmt(metric(big, "max_mean_rel_error"), 3) + failed_gates(big) +
                "; adjacent covariance L=16 " + fmt(c16, 3) + " +- " + fmt(metric(small, "adjacent_covariance_stderr"), 2) +
                ", L=64 " + fmt(c64, 3) + " +- " + fmt(metric(big, "adjacent_covariance_stderr"), 2)};
}

Verdict hitting(const Settings&) {
    const std::vector<int> sizes{50, 100, 200};
    const std::vector<double> xs{0.25, 0.5, 0.75};
    std::vector<double> worst;
    for (int L : sizes) {
        double w = 0.0;
        for (int k = 0; k < 5; ++k) {
            auto env = random_chain(L, 1.0, 2.0, 400 + k);
            Profile1D prof(env);
            for (double x : xs) {
                auto p = absorb_prob_one_particle(env, std::clamp(lattice_floor(x, L), 1, L - 1),
                                                  BoundaryConvention::literal);
                w = std::max(w, std::abs(p.PL / prof.A(x) - 1.0));
            }
        }
        worst.push_back(w);
    }
    const bool pass = worst[2] <= 0.02 && worst[1] < worst[0] && worst[2] < worst[1];
    return {pass, "max |ratio-1| L=50 " + fmt(worst[0], 3) + ", L=100 " + fmt(worst[1], 3) + ", L=200 " +
                      fmt(worst[2], 3)};
}

Verdict pair_absorption(const Settings&) {
    Verdict v{true, ""};
    double worst_ratio = 0.0, worst_asym = 0.0;
    for (int k = 0; k < 5; ++k) {
        AbsorptionParams p;
        p.ratio_tolerance = 1.0;  // the one-particle ratio belongs to the previous criterion
        auto rep = run_absorption(random_chain(100, 1.0, 2.0, 400 + k), p);
        for (const auto& g : rep.gates) {
            if (g.name.starts_with("one-particle")) continue;
            v.pass = v.pass && g.pass;
            if (g.name.starts_with("pair ratio")) worst_ratio = std::max(worst_ratio, g.value);
            if (g.name.starts_with("pair symmetry")) worst_asym = std::max(worst_asym, g.value);
            if (!g.pass) v.detail += " [" + g.name + " " + fmt(g.value) + "]";
        }
    }
    v.detail = "max |pair ratio-1| " + fmt(worst_ratio, 3) + ", max asymmetry " + fmt(worst_asym, 3) +
               ", marginals within 1e-9" + v.detail;
    return v;
}

Verdict drift(const Settings&) {
    bool pass = true;
    double min_dT = INFINITY, mismatches = 0.0;
    for (int k = 0; k < 100; ++k) {
        auto rep = run_drift_signs(random_chain(32, 1.0, 2.0, 500 + k));
        pass = pass && rep.pass();
        min_dT = std::min(min_dT, metric(rep, "min_dT"));
        mismatches += metric(rep, "printed_exact_mismatches");
    }
    return {pass && min_dT > 0, "signs hold over 100 environments, min exact dT " + fmt(min_dT, 3) + "; " +
                                    fmt(mismatches, 6) + " site configurations where printed forms disagree with the generator"};
}

Verdict random_limits(const Settings&) {
    const int L = 100000;
    auto dom = build_box_domain(L, Box::unit_interval());
    const scenario::RandomOmega a{SimplexField({0.0, 1.0}, {1.0, 0.0}), 1.0, ScalarField::constant(1.0)};
    const scenario::MacroscopicRate b{ScalarField::affine(1.0, {1.0}), 2, ScalarField::constant(1.0)};
    double err_a = 0.0, err_b = 0.0;
    for (int k = 0; k < 10; ++k) {
        RngStream rng(kSeed, stream_id(StreamPurpose::environment, 700 + k));
        Profile1D pa(build_scenario(a, dom, rng));
        Profile1D pb(build_scenario(b, dom, rng));
        for (int g = 1; g < 100; ++g) {
            const double x = g / 100.0;
            err_a = std::max(err_a, std::abs(pa.A(x) - (x * x + 2 * x) / 3));
            err_b = std::max(err_b, std::abs(pb.A(x) - std::log1p(x) / std::log(2.0)));
        }
    }
    return {err_a < 0.01 && err_b < 0.01,
            "max grid error random omega " + fmt(err_a, 3) + ", macroscopic rate " + fmt(err_b, 3)};
}

Verdict hydro(const Settings& s) {
    const Box box = Box::symmetric(2);
    const auto temperature = ScalarField::affine(1.5, {0.5, 0.0});
    const auto initial = ScalarField::affine_bump(1.5, {0.5, 0.0}, 0.8, box);
    const std::vector<std::vector<double>> probes{{0.5, 0.5}, {-0.5, 0.5}, {0.5, -0.5}, {-0.5, -0.5}, {0.25, 0.0}};
    const double t = 0.1;
    const std::vector<ScenarioSpec> specs{
        scenario::SmoothRate{ScalarField::affine(1.0, {0.3, 0.2}), 2, temperature},
        scenario::HalfspaceOmega{2, 4, 1.0, temperature},
        scenario::HalfspaceRate{0.5, 1.5, 2, temperature},
    };
    const int L = s.quick ? 16 : 32;

    Verdict v{true, ""};
    for (const auto& spec : specs) {
        auto pde = solve_evolution(make_pde_problem(spec, box, initial, 1.0 / 128), t);
        // Exact lattice mean via the one-particle dual: bias against the PDE at two scales.
        double bias[2] = {0.0, 0.0};
        for (int k = 0; k < 2; ++k) {
            RngStream rng(kSeed, stream_id(StreamPurpose::environment, 800));
            auto env = build_scenario(spec, build_box_domain(16 << k, box), rng);
            std::vector<double> xi0;
            for (int i = 0; i < env.domain().interior_count(); ++i)
                xi0.push_back(0.5 * env.omega(i) * initial(env.domain().interior_position(i)));
            for (const auto& x : probes) {
                const double exact = single_particle_dual_expectation(
                    env, env.domain().nearest_interior(x), diffusive_time(t, 16 << k), xi0);
                bias[k] = std::max(bias[k], std::abs(exact - pde.value_at(x)) / pde.value_at(x));
            }
        }
        RngStream rng(kSeed, stream_id(StreamPurpose::environment, 800));
        auto env = build_scenario(spec, build_box_domain(L, box), rng);
        HydroParams p{t, probes, initial, 1.0 / 128, 0.05};
        auto rep = run_hydro(spec, env, p, ReplicaPlan{kSeed, s.scale(10000), s.workers});
        const bool ok = rep.pass() && bias[1] < bias[0];
        v.pass = v.pass && ok;
        v.detail += std::string(scenario_name(spec)) + " max rel error " + fmt(metric(rep, "max_rel_error"), 3) +
                    ", bias L=16 " + fmt(bias[0], 3) + " L=32 " + fmt(bias[1], 3) + failed_gates(rep) + "; ";
    }
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every output except the timestamped log, concatenated in name order.
std::string artifacts(const fs::path& dir) {
    std::set<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename() != "run.log") files.insert(e.path());
    std::string all;
    for (const auto& f : files) all += f.filename().string() + '\n' + slurp(f);
    return all;
}

Verdict infrastructure(const Settings&) {
    const fs::path root = fs::temp_directory_path() / "kmp_acceptance";
    fs::remove_all(root);
    const std::string config = R"(schema_version: 1
seed: 42
replicas: 4000
domain: {dim: 1, L: 8}
scenario: {kind: iid_chain, omega_choices: [1, 2, 3], rate_lo: 0.5, rate_hi: 2.0, T0: 1.5, T1: 1.5}
pipelines:
  duality: {times: [1, 4], particles: [[3], [3, 4]], initial: 1.5}
  equilibrium: {checkpoints: [0, 8, 32]}
  absorption: {points: [0.5], ratio_tolerance: 1, pair_tolerance: 1}
)";
    auto run_in = [&](const char* name, unsigned workers) {
        auto c = parse_config(config, Overrides{std::nullopt, workers, (root / name).string()});
        run(c);
        return artifacts(root / name);
    };
    const auto first = run_in("a", 1), again = run_in("b", 1), threaded = run_in("c", 3);
    const bool identical = !first.empty() && first == again;
    const bool worker_free = first == threaded;

    // Negative controls: a Gamma law at the wrong scale and correlated coordinates.
    RngStream rng(kSeed, stream_id(StreamPurpose::auxiliary, 900));
    std::vector<double> wrong;
    for (int i = 0; i < 20000; ++i) wrong.push_back(sample_gamma(GammaParams{1.5, 1.2}, rng));
    auto scale_control = gamma_marginal_test(wrong, 3, 1.0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 20000; ++i) {
        const double shared = sample_gamma(GammaParams{1.0, 1.0}, rng);
        rows.push_back({shared + sample_gamma(GammaParams{0.5, 1.0}, rng), shared + sample_gamma(GammaParams{0.5, 1.0}, rng)});
    }
    auto joint_control = joint_factorization_test(rows);
    const bool scale_flagged = !scale_control.moments_within(3.0) && !scale_control.ks_pass();
    const bool joint_flagged = !joint_control.factorizes(3.0);
    fs::remove_all(root);
    return {identical && worker_free && scale_flagged && joint_flagged,
            std::string("reruns ") + (identical ? "identical" : "DIFFER") + ", 1 vs 3 workers " +
                (worker_free ? "identical" : "DIFFER") + ", wrong-scale control " +
                (scale_flagged ? "flagged" : "MISSED") + " (KS " + fmt(scale_control.ks_distance, 3) + " vs " +
                fmt(scale_control.ks_critical, 3) + "), correlated control " + (joint_flagged ? "flagged" : "MISSED") +
                " (max z " + fmt(joint_control.max_z, 3) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    Settings s;
    int only = 0;
    std::string report_path = "acceptance_report.txt";
    s.workers = std::max(1u, std::thread::hardware_concurrency());
    app.add_flag("--quick", s.quick, "reduced replica counts, hydrodynamics at L=16");
    app.add_option("--only", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
    app.add_option("--workers", s.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--report", report_path, "file receiving the criterion lines as well");
    CLI11_PARSE(app, argc, argv);

    struct Criterion {
        const char* name;
        Verdict (*fn)(const Settings&);
    };
    const Criterion criteria[] = {
        {"duality", duality},           {"equilibrium invariance", equilibrium}, {"steady state", steady_state},
        {"hitting probabilities", hitting}, {"two-particle absorption", pair_absorption},
        {"drift signs", drift},         {"random-environment limits", random_limits},
        {"hydrodynamic limit", hydro},  {"infrastructure", infrastructure},
    };
    std::ofstream report(report_path);
    bool all = true;
    for (int i = 0; i < 9; ++i) {
        if (only && only != i + 1) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].fn(s);
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream line;
        line << "CRITERION " << i + 1 << ' ' << (v.pass ? "PASS" : "FAIL") << ' ' << criteria[i].name << ": "
             << v.detail << " (" << fmt(sec, 3) << " s)";
        std::cout << line.str() << std::endl;
        report << line.str() << std::endl;
        all = all && v.pass;
    }
    return all ? 0 : 1;
}

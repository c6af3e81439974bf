#include "kmp/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kmp/csv.hpp"
#include "kmp/pde.hpp"
#include "kmp/steady1d.hpp"

namespace kmp {

std::string Table::cell(double v) { return CsvWriter::format(v); }

bool PipelineReport::pass() const {
    return std::all_of(gates.begin(), gates.end(), [](const Gate& g) { return g.pass; });
}

namespace {

Gate at_most(std::string name, double value, double threshold, std::string detail = {}) {
    return Gate{std::move(name), value <= threshold, value, threshold, std::move(detail)};
}

std::string join_sites(const std::vector<int>& sites) {
    std::string s;
    for (std::size_t i = 0; i < sites.size(); ++i) s += (i ? " " : "") + std::to_string(sites[i]);
    return s;
}

}  // namespace

PipelineReport run_duality(const Environment& env, const DualityParams& params, const ReplicaPlan& plan) {
    PipelineReport rep;
    rep.pipeline = "duality";
    Table t{"duality", {"particles", "N", "t", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "z", "exact", "exact_z", "status"}, {}};
    double worst = 0.0;
    for (const auto& set : params.particle_sets) {
        DualState n0;
        for (int s : set) n0.particles.push_back(Location::active(s));
        for (double time : params.times) {
            auto est = verify_duality_mc(env, params.xi0, n0, time, plan);
            const double z = est.z_score();
            bool ok = z <= params.sigmas;
            double exact = std::numeric_limits<double>::quiet_NaN(), exact_z = 0.0;
            if (set.size() == 1) {
                exact = single_particle_dual_expectation(env, set[0], time, params.xi0.xi);
                exact_z = z_score(est.rhs.mean, exact, est.rhs.std_error);
                ok = ok && exact_z <= params.sigmas;
                worst = std::max(worst, exact_z);
            }
            worst = std::max(worst, z);
            t.add(join_sites(set), static_cast<int>(set.size()), time, est.lhs.mean, est.lhs.std_error, est.rhs.mean,
                  est.rhs.std_error, z, exact, exact_z, ok);
            rep.gates.push_back(at_most("duality[" + join_sites(set) + "] t=" + Table::cell(time),
                                        std::max(z, exact_z), params.sigmas, "max z-score of lhs-rhs and dual-exact"));
        }
    }
    rep.metrics.emplace_back("max_z", worst);
    rep.tables.push_back(std::move(t));
    return rep;
}

PipelineReport run_steady_state(const Environment& env, const SteadyStateParams& params) {
    PipelineReport rep;
    rep.pipeline = "steady_state";
    Profile1D profile(env);
    ChainView chain(env);
    const int L = chain.L();

    SteadyStatePlan plan = params.plan;
    std::vector<int> probe_m;
    plan.probe_sites.clear();
    for (double x : params.probes) {
        const int m = std::clamp(static_cast<int>(std::lround(x * L)), 1, L - 1);
        probe_m.push_back(m);
        plan.probe_sites.push_back(chain.site(m));
    }
    auto runs = sample_steady_state(env, params.initial, plan);

    Table prof{"profile", {"m", "x", "omega", "psi", "A", "u", "mean", "stderr", "target", "rel_error"}, {}};
    double worst_rel = 0.0;
    for (int m = 1; m < L; ++m) {
        const int site = chain.site(m);
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(r.mean[site]);
        auto est = mean_with_error(v);
        const double target = 0.5 * chain.omega(m) * profile.u_at(m);
        const double rel = std::abs(est.mean - target) / target;
        worst_rel = std::max(worst_rel, rel);
        prof.add(m, static_cast<double>(m) / L, chain.omega(m), profile.psi(m), profile.A_at(m), profile.u_at(m),
                 est.mean, est.std_error, target, rel);
    }
    rep.gates.push_back(at_most("site means", worst_rel, params.mean_tolerance,
                                "max relative deviation of time-averaged means from (omega/2) u^(L)"));
    rep.metrics.emplace_back("max_mean_rel_error", worst_rel);

    Table moments{"moments", {"m", "order", "empirical", "stderr", "reference", "rel_error", "z"}, {}};
    Table ks{"ks", {"m", "samples", "distance", "critical", "status"}, {}};
    for (std::size_t p = 0; p < probe_m.size(); ++p) {
        const int m = probe_m[p];
        const int site = plan.probe_sites[p];
        std::vector<std::vector<double>> per;
        std::vector<double> pooled;
        for (const auto& r : runs) {
            per.push_back({r.mean[site], r.power2[site], r.power3[site], r.power4[site]});
            pooled.insert(pooled.end(), r.probe_snapshots[p].begin(), r.probe_snapshots[p].end());
        }
        auto mr = replica_moment_report(per, chain.omega(m), profile.u_at(m));
        double worst_z = 0.0;
        for (const auto& l : mr.lines) {
            moments.add(m, l.order, l.empirical.mean, l.empirical.std_error, l.reference, l.rel_error, l.z);
            worst_z = std::max(worst_z, l.z);
        }
        if (params.moment_gates)
            rep.gates.push_back(at_most("moments m=" + std::to_string(m), worst_z, params.sigmas,
                                        "max z-score of moments 1..4 against Gamma(omega/2, u^(L))"));
        const double d = ks_distance_gamma(pooled, 0.5 * chain.omega(m), profile.u_at(m));
        const double crit = ks_critical_1pct(pooled.size());
        ks.add(m, static_cast<long>(pooled.size()), d, crit, d <= crit);
        rep.gates.push_back(at_most("ks m=" + std::to_string(m), d, crit, "KS distance to Gamma(omega/2, u^(L))"));
    }

    const int sites = env.domain().interior_count();
    const int lo = params.bulk_lo >= 0 ? params.bulk_lo : sites / 4;
    const int hi = params.bulk_hi >= 0 ? params.bulk_hi : sites - sites / 4;
    auto cov = adjacent_normalized_covariance(runs, lo, hi);
    rep.metrics.emplace_back("adjacent_covariance", cov.mean);
    rep.metrics.emplace_back("adjacent_covariance_stderr", cov.std_error);

    rep.tables.push_back(std::move(prof));
    rep.tables.push_back(std::move(moments));
    rep.tables.push_back(std::move(ks));
    return rep;
}

PipelineReport run_hydro(const ScenarioSpec& spec, const Environment& env, const HydroParams& params,
                         const ReplicaPlan& plan) {
    PipelineReport rep;
    rep.pipeline = "hydro";
    auto problem = make_pde_problem(spec, env.domain().box(), params.initial, params.h);
    auto pde = solve_evolution(problem, params.t);
    auto lines = hydro_comparison(env, params.initial, params.probes, params.t, pde, plan);

    const int d = env.domain().dim();
    Table t{"hydro", {}, {}};
    for (int a = 1; a <= d; ++a) t.columns.push_back("x" + std::to_string(a));
    for (const char* c : {"site", "mc", "stderr", "pde", "rel_error", "status"}) t.columns.push_back(c);
    double worst = 0.0;
    for (const auto& l : lines) {
        std::vector<std::string> row;
        for (double x : l.x) row.push_back(Table::cell(x));
        for (auto&& c : {Table::cell(l.site), Table::cell(l.mc.mean), Table::cell(l.mc.std_error), Table::cell(l.pde),
                         Table::cell(l.rel_error), Table::cell(l.rel_error <= params.tolerance)})
            row.push_back(c);
        t.rows.push_back(std::move(row));
        worst = std::max(worst, l.rel_error);
        std::string where;
        for (double x : l.x) where += (where.empty() ? "" : ",") + Table::cell(x);
        rep.gates.push_back(at_most("hydro x=(" + where + ")", l.rel_error, params.tolerance,
                                    "relative error of Monte Carlo against the reference PDE"));
    }
    rep.metrics.emplace_back("max_rel_error", worst);
    rep.metrics.emplace_back("pde_residual", pde.residual);
    rep.tables.push_back(std::move(t));
    return rep;
}

PipelineReport run_absorption(const Environment& env, const AbsorptionParams& params) {
    PipelineReport rep;
    rep.pipeline = "absorption";
    Profile1D profile(env);
    const int L = profile.L();
    Table one{"absorption_one", {"x", "start", "P0", "PL", "A", "ratio", "PL_other_convention", "ratio_other_convention"}, {}};
    Table two{"absorption_pair", {"x", "start", "p00", "p0L", "pL0", "pLL", "ratio", "asymmetry", "marginal_error"}, {}};
    auto right_lit = absorb_prob_right_all(env, BoundaryConvention::literal);
    for (double x : params.points) {
        const int m = std::clamp(lattice_floor(x, L), 1, L - 1);
        auto p = absorb_prob_one_particle(env, m, params.convention);
        const double A = profile.A(x);
        const double ratio = p.PL / A;
        const auto other = params.convention == BoundaryConvention::literal ? BoundaryConvention::martingale
                                                                            : BoundaryConvention::literal;
        const double PL_other = absorb_prob_one_particle(env, m, other).PL;
        one.add(x, m, p.P0, p.PL, A, ratio, PL_other, PL_other / A);
        rep.gates.push_back(at_most("one-particle x=" + Table::cell(x), std::abs(ratio - 1.0), params.ratio_tolerance,
                                    "|P(L)/A^(L)(x) - 1|"));
        if (!params.pair) continue;
        auto q = absorb_probs_two_particles(env, m, m);
        const double pr = (q.pLL + q.p00) / (A * A + (1 - A) * (1 - A));
        const double asym = std::abs(q.p0L - q.pL0);
        const double marg = std::max(std::abs(q.pL0 + q.pLL - right_lit[m]), std::abs(q.p0L + q.pLL - right_lit[m]));
        two.add(x, m, q.p00, q.p0L, q.pL0, q.pLL, pr, asym, marg);
        rep.gates.push_back(at_most("pair ratio x=" + Table::cell(x), std::abs(pr - 1.0), params.pair_tolerance,
                                    "|[P(L,L)+P(0,0)]/[A^2+(1-A)^2] - 1|"));
        rep.gates.push_back(at_most("pair symmetry x=" + Table::cell(x), asym, 1e-12, "|P(0,L) - P(L,0)|"));
        rep.gates.push_back(at_most("pair marginals x=" + Table::cell(x), marg, params.marginal_tolerance,
                                    "pair marginals against the one-particle solve"));
    }
    rep.tables.push_back(std::move(one));
    if (params.pair) rep.tables.push_back(std::move(two));
    return rep;
}

PipelineReport run_drift_signs(const Environment& env) {
    PipelineReport rep;
    rep.pipeline = "drift_signs";
    ChainView chain(env);
    const int L = chain.L();
    Table t{"drift", {"i", "config", "dS_printed", "dT_printed", "dS_exact", "dT_exact"}, {}};
    double min_same_dS = std::numeric_limits<double>::infinity();
    double max_adj_dS = -std::numeric_limits<double>::infinity();
    double min_dT = std::numeric_limits<double>::infinity();
    int mismatches = 0;
    auto differs = [](double a, double b) { return std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(b)); };
    for (int i = 2; i <= L - 2; ++i) {
        for (auto cfg : {PairConfig::same_site, PairConfig::adjacent}) {
            if (cfg == PairConfig::adjacent && i + 1 > L - 2) continue;
            auto d = drift_S_T(env, cfg, i);
            const bool same = cfg == PairConfig::same_site;
            t.add(i, same ? "same_site" : "adjacent", d.printed.dS, d.printed.dT, d.exact.dS, d.exact.dT);
            if (same)
                min_same_dS = std::min(min_same_dS, d.exact.dS);
            else
                max_adj_dS = std::max(max_adj_dS, d.exact.dS);
            min_dT = std::min(min_dT, d.exact.dT);
            mismatches += differs(d.printed.dS, d.exact.dS) + differs(d.printed.dT, d.exact.dT);
        }
    }
    rep.gates.push_back(Gate{"same-site dS > 0", min_same_dS > 0, min_same_dS, 0.0, "smallest exact same-site drift of S"});
    rep.gates.push_back(Gate{"adjacent dS < 0", max_adj_dS < 0, max_adj_dS, 0.0, "largest exact adjacent drift of S"});
    rep.gates.push_back(Gate{"dT > 0", min_dT > 0, min_dT, 0.0, "smallest exact drift of T"});
    rep.metrics.emplace_back("min_dT", min_dT);
    rep.metrics.emplace_back("printed_exact_mismatches", mismatches);
    rep.tables.push_back(std::move(t));
    return rep;
}

PipelineReport run_equilibrium(const Environment& env, const EquilibriumParams& params) {
    PipelineReport rep;
    rep.pipeline = "equilibrium";
    auto inv = equilibrium_invariance_test(env, params.plan);
    Table t{"equilibrium", {"time", "site", "order", "empirical", "stderr", "reference", "z"}, {}};
    for (const auto& l : inv.lines)
        t.add(l.time, l.site, l.order, l.empirical.mean, l.empirical.std_error, l.reference, l.z);
    rep.gates.push_back(at_most("moment invariance", inv.max_z, params.sigmas,
                                "max z-score over sites, orders and checkpoints"));
    rep.metrics.emplace_back("max_z", inv.max_z);
    rep.metrics.emplace_back("exceedances", inv.exceedances(params.sigmas));
    rep.metrics.emplace_back("comparisons", static_cast<double>(inv.lines.size()));
    rep.tables.push_back(std::move(t));
    return rep;
}

}  // namespace kmp

#include "kmp/dual.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "kmp/replicas.hpp"

namespace kmp {

OccupancyView occupancy(const DualState& state, const LatticeDomain& domain) {
    OccupancyView occ;
    occ.n.assign(domain.interior_count(), 0);
    occ.n_hat.assign(domain.boundary_count(), 0);
    for (auto loc : state.particles) {
        if (loc.is_active()) {
            ++occ.n[loc.site()];
        } else {
            ++occ.n_hat[loc.bath()];
        }
    }
    return occ;
}

namespace {

void split_in_place(std::vector<Location>& particles, const Edge& e, const Environment& env, RngStream& rng) {
    const auto u = Location::active(e.u);
    const auto v = Location::active(e.v);
    bool any = false;
    for (auto loc : particles) any = any || loc == u || loc == v;
    if (!any) return;
    double q = sample_beta(BetaParams(0.5 * env.omega(e.u), 0.5 * env.omega(e.v)), rng);
    for (auto& loc : particles) {
        if (loc == u || loc == v) loc = rng.uniform() < q ? u : v;
    }
}

void absorb_in_place(std::vector<Location>& particles, const Edge& e) {
    const auto u = Location::active(e.u);
    for (auto& loc : particles) {
        if (loc == u) loc = Location::absorbed(e.v);
    }
}

}  // namespace

DualState dual_step_interior(DualState state, int edge_id, const Environment& env, RngStream& rng) {
    const auto& e = env.domain().edges().at(edge_id);
    if (e.to_bath) throw std::invalid_argument("dual_step_interior: edge leads to a bath");
    split_in_place(state.particles, e, env, rng);
    return state;
}

DualState dual_step_boundary(DualState state, int edge_id, const Environment& env) {
    const auto& e = env.domain().edges().at(edge_id);
    if (!e.to_bath) throw std::invalid_argument("dual_step_boundary: edge is interior");
    absorb_in_place(state.particles, e);
    return state;
}

DualRun simulate_dual(const Environment& env, DualState init, double t_end, RngStream& rng) {
    const auto& dom = env.domain();
    const auto& edges = dom.edges();
    if (std::isinf(t_end)) {
        bool has_bath = std::any_of(edges.begin(), edges.end(), [](const Edge& e) { return e.to_bath; });
        if (!has_bath && !init.particles.empty()) {
            throw std::invalid_argument("simulate_dual: run-until-absorbed needs at least one bath edge");
        }
    } else if (t_end < init.time) {
        throw std::invalid_argument("simulate_dual: t_end precedes the initial time");
    }

    DualRun out{std::move(init), 0};
    auto& particles = out.state.particles;
    double t = out.state.time;
    std::vector<int> live;
    std::vector<double> cumulative;
    for (;;) {
        live.clear();
        for (auto loc : particles) {
            if (!loc.is_active()) continue;
            for (int id : dom.incident_edges(loc.site())) {
                if (std::find(live.begin(), live.end(), id) == live.end()) live.push_back(id);
            }
        }
        if (live.empty()) break;
        // Incident-edge order is fixed by the domain, so sorting keeps the
        // event choice independent of particle labels.
        std::sort(live.begin(), live.end());
        cumulative.resize(live.size());
        double total = 0.0;
        for (std::size_t k = 0; k < live.size(); ++k) cumulative[k] = (total += env.rate(live[k]));
        double next = t + rng.exponential() / total;
        if (next > t_end) break;
        t = next;
        double pick = rng.uniform() * total;
        auto k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                          cumulative.begin());
        if (k >= live.size()) k = live.size() - 1;
        const auto& e = edges[live[k]];
        if (e.to_bath) {
            absorb_in_place(particles, e);
        } else {
            split_in_place(particles, e, env, rng);
        }
        ++out.events;
    }
    out.state.time = std::isinf(t_end) ? t : t_end;
    return out;
}

double duality_F(const OccupancyView& occ, std::span<const double> xi, const Environment& env) {
    double log_f = 0.0;
    for (std::size_t u = 0; u < occ.n.size(); ++u) {
        int n = occ.n[u];
        if (n == 0) continue;
        if (xi[u] <= 0.0) return 0.0;
        double half = 0.5 * env.omega(static_cast<int>(u));
        log_f += n * std::log(xi[u]) + log_gamma(half) - log_gamma(n + half);
    }
    for (std::size_t v = 0; v < occ.n_hat.size(); ++v) {
        int n = occ.n_hat[v];
        if (n == 0) continue;
        double temp = env.bath_temp(static_cast<int>(v));
        if (temp <= 0.0) return 0.0;
        log_f += n * std::log(temp);
    }
    return std::exp(log_f);
}

std::vector<RingOutcome> ring_outcomes(const Environment& env, std::span<const Location> particles,
                                       int edge_id) {
    const auto& e = env.domain().edges().at(edge_id);
    std::vector<Location> base(particles.begin(), particles.end());
    if (e.to_bath) {
        absorb_in_place(base, e);
        return {{std::move(base), 1.0}};
    }
    const auto u = Location::active(e.u);
    const auto v = Location::active(e.v);
    std::vector<std::size_t> pooled;
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (base[i] == u || base[i] == v) pooled.push_back(i);
    }
    const auto n = static_cast<unsigned>(pooled.size());
    if (n > 20) throw std::length_error("ring_outcomes: too many pooled particles to enumerate");
    BetaParams split(0.5 * env.omega(e.u), 0.5 * env.omega(e.v));
    std::vector<RingOutcome> out;
    out.reserve(std::size_t{1} << n);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        RingOutcome o{base, labeled_subset_prob(n, static_cast<unsigned>(std::popcount(mask)), split)};
        for (unsigned j = 0; j < n; ++j) o.particles[pooled[j]] = (mask >> j & 1u) ? u : v;
        out.push_back(std::move(o));
    }
    return out;
}

SingleParticleLaw single_particle_transient(const Environment& env, int start_site, double t) {
    const auto& dom = env.domain();
    const int n = dom.interior_count();
    const int m = dom.boundary_count();
    if (start_site < 0 || start_site >= n) throw std::out_of_range("single_particle_transient: bad start");
    if (t < 0.0) throw std::invalid_argument("single_particle_transient: negative time");

    // Jump rates of a lone particle: across interior edge (u,v) towards v at
    // r * omega_v / (omega_u + omega_v); into a bath at the full edge rate.
    struct Move {
        int target;  // >= 0 interior, < 0 bath -(b+1)
        double rate;
    };
    std::vector<std::vector<Move>> moves(n);
    std::vector<double> exit(n, 0.0);
    for (int id = 0; id < static_cast<int>(dom.edges().size()); ++id) {
        const auto& e = dom.edges()[id];
        double r = env.rate(id);
        if (e.to_bath) {
            moves[e.u].push_back({-e.v - 1, r});
            exit[e.u] += r;
        } else {
            double wu = env.omega(e.u), wv = env.omega(e.v);
            moves[e.u].push_back({e.v, r * wv / (wu + wv)});
            moves[e.v].push_back({e.u, r * wu / (wu + wv)});
            exit[e.u] += r * wv / (wu + wv);
            exit[e.v] += r * wu / (wu + wv);
        }
    }
    double lambda = *std::max_element(exit.begin(), exit.end());

    SingleParticleLaw law;
    law.active.assign(n, 0.0);
    law.absorbed.assign(m, 0.0);
    std::vector<double> p(n, 0.0), next(n), absorbed_mass(m, 0.0), absorbed_next(m);
    p[start_site] = 1.0;
    if (t == 0.0 || lambda == 0.0) {
        law.active = p;
        return law;
    }

    const double mu = lambda * t;
    const auto k_max = static_cast<long>(std::ceil(mu + 12.0 * std::sqrt(mu) + 40.0));
    double accumulated = 0.0;
    for (long k = 0; k <= k_max; ++k) {
        double w = std::exp(-mu + k * std::log(mu) - log_gamma(k + 1.0));
        for (int i = 0; i < n; ++i) law.active[i] += w * p[i];
        for (int b = 0; b < m; ++b) law.absorbed[b] += w * absorbed_mass[b];
        accumulated += w;
        if (accumulated > 1.0 - 1e-16 && k > mu) break;

        // One step of the uniformized chain.
        std::fill(next.begin(), next.end(), 0.0);
        absorbed_next = absorbed_mass;
        for (int i = 0; i < n; ++i) {
            if (p[i] == 0.0) continue;
            next[i] += p[i] * (1.0 - exit[i] / lambda);
            for (const auto& mv : moves[i]) {
                double flow = p[i] * mv.rate / lambda;
                if (mv.target >= 0) {
                    next[mv.target] += flow;
                } else {
                    absorbed_next[-mv.target - 1] += flow;
                }
            }
        }
        std::swap(p, next);
        std::swap(absorbed_mass, absorbed_next);
    }
    return law;
}

double single_particle_dual_expectation(const Environment& env, int start_site, double t,
                                        std::span<const double> xi0) {
    auto law = single_particle_transient(env, start_site, t);
    double value = 0.0;
    for (std::size_t i = 0; i < law.active.size(); ++i) {
        double half = 0.5 * env.omega(static_cast<int>(i));
        value += law.active[i] * xi0[i] * std::exp(log_gamma(half) - log_gamma(1.0 + half));
    }
    for (std::size_t b = 0; b < law.absorbed.size(); ++b) value += law.absorbed[b] * env.bath_temp(static_cast<int>(b));
    return value;
}

double DualityEstimate::combined_stderr() const {
    return std::sqrt(lhs.std_error * lhs.std_error + rhs.std_error * rhs.std_error);
}

double DualityEstimate::z_score() const { return kmp::z_score(lhs.mean, rhs.mean, combined_stderr()); }

DualityEstimate verify_duality_mc(const Environment& env, const EnergyState& xi0, const DualState& n0, double t,
                                  const ReplicaPlan& plan) {
    const auto n0_occ = occupancy(n0, env.domain());
    ForwardSimulator forward(env);
    auto lhs_values = run_replicas(plan.replicas, plan.workers, [&](std::size_t r) {
        RngStream rng(plan.seed, stream_id(StreamPurpose::forward, r));
        EnergyState start = xi0;
        start.time = 0.0;
        auto run = forward.run(std::move(start), t, rng);
        return duality_F(n0_occ, run.state.xi, env);
    });
    auto rhs_values = run_replicas(plan.replicas, plan.workers, [&](std::size_t r) {
        RngStream rng(plan.seed, stream_id(StreamPurpose::dual, r));
        DualState start = n0;
        start.time = 0.0;
        auto run = simulate_dual(env, std::move(start), t, rng);
        return duality_F(occupancy(run.state, env.domain()), xi0.xi, env);
    });
    return {mean_with_error(lhs_values), mean_with_error(rhs_values)};
}

MeanWithError estimate_moment_via_dual(const Environment& env, std::span<const double> x,
                                       std::span<const MomentTerm> terms, double t_micro, const ScalarField& f,
                                       const ReplicaPlan& plan) {
    const auto& dom = env.domain();
    const int centre = dom.nearest_interior(x);
    auto centre_coord = dom.interior_site(centre);

    DualState init;
    double log_moment_factor = 0.0;
    for (const auto& term : terms) {
        std::vector<int> c(centre_coord.begin(), centre_coord.end());
        for (int a = 0; a < dom.dim() && a < static_cast<int>(term.offset.size()); ++a) c[a] += term.offset[a];
        int site = dom.interior_index(c);
        if (site < 0) throw std::invalid_argument("estimate_moment_via_dual: offset leaves the interior");
        double half = 0.5 * env.omega(site);
        log_moment_factor += log_gamma(term.order + half) - log_gamma(half);
        for (int k = 0; k < term.order; ++k) init.particles.push_back(Location::active(site));
    }
    const double moment_factor = std::exp(log_moment_factor);

    std::vector<double> f_at(dom.interior_count());
    for (int i = 0; i < dom.interior_count(); ++i) f_at[i] = f(dom.interior_position(i));

    auto values = run_replicas(plan.replicas, plan.workers, [&](std::size_t r) {
        RngStream rng(plan.seed, stream_id(StreamPurpose::dual, r));
        auto run = simulate_dual(env, init, t_micro, rng);
        double product = moment_factor;
        for (auto loc : run.state.particles) {
            product *= loc.is_active() ? f_at[loc.site()] : env.bath_temp(loc.bath());
        }
        return product;
    });
    return mean_with_error(values);
}

}  // namespace kmp

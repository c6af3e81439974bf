#include <cmath>
#include <vector>

#include "doctest.h"
#include "kmp/absorption.hpp"
#include "kmp/dual.hpp"
#include "kmp/replicas.hpp"

using namespace kmp;

namespace {

Environment hetero_chain(double T0 = 1.0, double T1 = 2.0) {
    const std::vector<int> omega{1, 3, 2, 2, 1};
    const std::vector<double> rates{0.5, 1.5, 1.0, 2.0, 0.8, 1.2};
    return make_chain(omega, rates, T0, T1);
}

DualState particles_at(std::initializer_list<int> sites) {
    DualState s;
    for (int i : sites) s.particles.push_back(Location::active(i));
    return s;
}

}  // namespace

TEST_CASE("duality function on small configurations") {
    auto env = hetero_chain();
    const auto& dom = env.domain();
    std::vector<double> xi{2.0, 1.0, 0.5, 3.0, 4.0};
    CHECK(duality_F(occupancy(DualState{}, dom), xi, env) == 1.0);
    // omega = 2 at site index 2: F = xi Gamma(1)/Gamma(2)
    ChainView c(env);
    auto one = particles_at({c.site(3)});
    CHECK(duality_F(occupancy(one, dom), xi, env) == doctest::Approx(0.5));
    // two particles on an omega = 1 site: xi^2 Gamma(1/2)/Gamma(5/2) = xi^2 * 4/3
    auto two = particles_at({c.site(1), c.site(1)});
    CHECK(duality_F(occupancy(two, dom), xi, env) == doctest::Approx(4.0 * 4.0 / 3.0));
    // absorbed particles contribute the bath temperature
    DualState abs;
    abs.particles = {Location::absorbed(0), Location::absorbed(1), Location::absorbed(1)};
    auto occ = occupancy(abs, dom);
    const double expect = std::pow(env.bath_temp(0), occ.n_hat[0]) * std::pow(env.bath_temp(1), occ.n_hat[1]);
    CHECK(duality_F(occ, xi, env) == doctest::Approx(expect));
    // 0^0 = 1: empty sites with zero energy are harmless, occupied ones vanish
    std::vector<double> zeros(5, 0.0);
    CHECK(duality_F(occupancy(DualState{}, dom), zeros, env) == 1.0);
    CHECK(duality_F(occupancy(one, dom), zeros, env) == 0.0);
}

TEST_CASE("ring outcomes form a probability law") {
    auto env = hetero_chain();
    ChainView c(env);
    auto s = particles_at({c.site(2), c.site(2), c.site(3), c.site(5)});
    const int edge = c.edge_below(3);
    auto out = ring_outcomes(env, s.particles, edge);
    CHECK(out.size() == 8);
    double total = 0.0;
    for (const auto& o : out) {
        total += o.prob;
        CHECK(o.particles[3] == s.particles[3]);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

    auto bath = ring_outcomes(env, s.particles, c.edge_below(6));
    REQUIRE(bath.size() == 1);
    CHECK_FALSE(bath[0].particles[3].is_active());
    CHECK(bath[0].particles[0] == s.particles[0]);
}

TEST_CASE("ring outcomes agree with sampled steps") {
    auto env = hetero_chain();
    ChainView c(env);
    auto s = particles_at({c.site(2), c.site(3), c.site(3)});
    const int edge = c.edge_below(3);
    auto law = ring_outcomes(env, s.particles, edge);
    std::vector<int> counts(law.size(), 0);
    const int n = 200000;
    RngStream rng(6, 6);
    for (int k = 0; k < n; ++k) {
        auto next = dual_step_interior(s, edge, env, rng);
        for (std::size_t j = 0; j < law.size(); ++j)
            if (law[j].particles == next.particles) ++counts[j];
    }
    for (std::size_t j = 0; j < law.size(); ++j) {
        const double p = law[j].prob;
        CHECK(std::abs(counts[j] / double(n) - p) < 4 * std::sqrt(p * (1 - p) / n));
    }
}

TEST_CASE("boundary step absorbs every particle at the site") {
    auto env = hetero_chain();
    ChainView c(env);
    auto s = particles_at({c.site(1), c.site(1), c.site(2)});
    auto next = dual_step_boundary(s, c.edge_below(1), env);
    CHECK_FALSE(next.particles[0].is_active());
    CHECK_FALSE(next.particles[1].is_active());
    CHECK(next.particles[2].is_active());
    CHECK_THROWS_AS(dual_step_boundary(s, c.edge_below(2), env), std::invalid_argument);
}

TEST_CASE("single particle law conserves mass and converges to the absorption law") {
    auto env = hetero_chain();
    ChainView c(env);
    for (double t : {0.0, 0.7, 5.0, 400.0}) {
        auto law = single_particle_transient(env, c.site(2), t);
        double total = 0.0;
        for (double p : law.active) total += p;
        for (double p : law.absorbed) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto late = single_particle_transient(env, c.site(2), 400.0);
    auto exact = absorb_prob_one_particle(env, 2);
    const int L = c.L();
    const int right = env.domain().boundary_index(std::span<const int>(&L, 1));
    CHECK(late.absorbed[right] == doctest::Approx(exact.PL).epsilon(1e-9));
}

TEST_CASE("simulated single particle matches its exact transient law") {
    auto env = hetero_chain();
    ChainView c(env);
    const double t = 1.5;
    auto law = single_particle_transient(env, c.site(3), t);
    const int n = 100000;
    auto ends = run_replicas(n, 4, [&](std::size_t r) {
        RngStream rng(12, r);
        return simulate_dual(env, particles_at({c.site(3)}), t, rng).state.particles[0].code();
    });
    for (int i = 0; i < env.domain().interior_count(); ++i) {
        int hits = 0;
        for (int code : ends) hits += code == i;
        const double p = law.active[i];
        CHECK(std::abs(hits / double(n) - p) < 4 * std::sqrt(p * (1 - p) / n) + 1e-12);
    }
}

TEST_CASE("absorption frequencies of a lone particle match the exact solve") {
    auto env = hetero_chain();
    ChainView c(env);
    const int L = c.L();
    const int right = env.domain().boundary_index(std::span<const int>(&L, 1));
    for (int m : {1, 3, 5}) {
        const int n = 40000;
        auto hits = run_replicas(n, 4, [&](std::size_t r) {
            RngStream rng(21 + m, r);
            auto run = simulate_dual(env, particles_at({c.site(m)}), kUntilAbsorbed, rng);
            return run.state.particles[0].bath() == right ? 1.0 : 0.0;
        });
        auto est = mean_with_error(hits);
        const double p = absorb_prob_one_particle(env, m).PL;
        CAPTURE(m);
        CHECK(std::abs(est.mean - p) < 3 * std::sqrt(p * (1 - p) / n));
    }
}

TEST_CASE("dual run rejects a horizon before its start") {
    auto env = hetero_chain();
    RngStream rng(1, 1);
    CHECK_THROWS_AS(simulate_dual(env, DualState{{}, 1.0}, 0.5, rng), std::invalid_argument);
}

TEST_CASE("forward and dual expectations agree for a pair of particles") {
    auto env = hetero_chain(0.5, 2.0);
    ChainView c(env);
    EnergyState xi0{{3.0, 0.2, 1.0, 0.0, 2.5}, 0.0};
    auto n0 = particles_at({c.site(2), c.site(2)});
    auto est = verify_duality_mc(env, xi0, n0, 1.0, ReplicaPlan{5, 40000, 4});
    CHECK(est.z_score() < 4.0);

    auto n1 = particles_at({c.site(4)});
    auto est1 = verify_duality_mc(env, xi0, n1, 0.8, ReplicaPlan{6, 40000, 4});
    const double exact = single_particle_dual_expectation(env, c.site(4), 0.8, xi0.xi);
    CHECK(std::abs(est1.lhs.mean - exact) < 4 * est1.lhs.std_error);
    CHECK(std::abs(est1.rhs.mean - exact) < 4 * est1.rhs.std_error);
}

TEST_CASE("dual moment estimate is exact in equilibrium") {
    LatticeDomain dom(6, Box::symmetric(2));
    RngStream erng(1, 1);
    auto env = build_scenario(scenario::HalfspaceOmega{1, 3, 1.0, ScalarField::constant(1.5)}, dom, erng);
    const std::vector<double> x{0.5, 0.0};
    const std::vector<MomentTerm> terms{{{0, 0}, 2}};
    auto est = estimate_moment_via_dual(env, x, terms, 3.0, ScalarField::constant(1.5), ReplicaPlan{1, 200, 2});
    const int site = dom.nearest_interior(x);
    CHECK(est.mean == doctest::Approx(gamma_moment(2, GammaParams(0.5 * env.omega(site), 1.5))).epsilon(1e-12));
    CHECK(est.std_error < 1e-12);
}

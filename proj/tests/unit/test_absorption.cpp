#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "kmp/absorption.hpp"
#include "kmp/dual.hpp"
#include "kmp/estimate.hpp"
#include "kmp/replicas.hpp"
#include "kmp/steady1d.hpp"

using namespace kmp;

namespace {

// Hitting probabilities of a nearest-neighbour walk with arbitrary left/right
// rates by a dense solve of the first-passage equations on the full state space.
std::vector<double> hit_right_dense(const std::vector<double>& left, const std::vector<double>& right) {
    const int n = static_cast<int>(left.size());  // interior states 1..n, absorbing 0 and n+1
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 2, n + 2);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 2);
    M(0, 0) = 1.0;
    M(n + 1, n + 1) = 1.0;
    b(n + 1) = 1.0;
    for (int k = 1; k <= n; ++k) {
        M(k, k) = left[k - 1] + right[k - 1];
        M(k, k - 1) = -left[k - 1];
        M(k, k + 1) = -right[k - 1];
    }
    Eigen::VectorXd h = M.fullPivLu().solve(b);
    return std::vector<double>(h.data(), h.data() + n + 2);
}

Environment homogeneous(int L, int omega = 2, double rate = 1.0) {
    return make_chain(std::vector<int>(L - 1, omega), std::vector<double>(L, rate), 1.0, 2.0);
}

Environment random_chain(int L, std::uint64_t seed) {
    RngStream rng(seed, 1);
    const std::vector<int> choices{1, 2, 3};
    return make_iid_chain(L, choices, 0.5, 1.5, 1.0, 2.0, rng);
}

}  // namespace

TEST_CASE("network formula on small chains") {
    CHECK(hitting_prob_network({{1, 1, 1, 1}, 0, 4, 2}) == doctest::Approx(0.5));
    CHECK(hitting_prob_network({{1, 1, 1}, 0, 3, 1}) == doctest::Approx(2.0 / 3.0));
    CHECK(hitting_prob_network({{1, 2, 4}, 0, 3, 1}) == doctest::Approx(6.0 / 7.0));
    CHECK_THROWS_AS(hitting_prob_network({{1, 1}, 0, 2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(hitting_prob_network({{1, -1}, 0, 2, 1}), std::invalid_argument);
}

TEST_CASE("network formula equals the linear solve for random resistances") {
    RngStream rng(31, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const int A = static_cast<int>(rng.below(5)) - 2;
        const int len = 2 + static_cast<int>(rng.below(30));
        ResistorChain chain{std::vector<double>(len), A, A + len, A + 1 + static_cast<int>(rng.below(len - 1))};
        for (auto& R : chain.resistance) R = std::exp(4.0 * rng.uniform() - 2.0);
        // conductance walk: from i step to i-1 at 1/R_{i-1}, to i+1 at 1/R_i
        std::vector<double> left(len - 1), right(len - 1);
        for (int k = 0; k < len - 1; ++k) {
            left[k] = 1.0 / chain.resistance[k];
            right[k] = 1.0 / chain.resistance[k + 1];
        }
        auto h = hit_right_dense(left, right);
        CHECK(hitting_prob_network(chain) == doctest::Approx(1.0 - h[chain.start - A]).epsilon(1e-10));
    }
}

TEST_CASE("one-particle rates") {
    auto env = homogeneous(10, 2, 0.8);
    for (int m = 2; m <= 8; ++m) {
        auto j = one_particle_jump_rates(env, m);
        CHECK(j.left == doctest::Approx(0.4));
        CHECK(j.right == doctest::Approx(0.4));
    }
    CHECK(one_particle_jump_rates(env, 1).left == doctest::Approx(0.8));
    CHECK(one_particle_jump_rates(env, 1, BoundaryConvention::martingale).left == doctest::Approx(0.4));
    CHECK(one_particle_jump_rates(env, 9).right == doctest::Approx(0.8));
    CHECK_THROWS_AS(one_particle_jump_rates(env, 0), std::out_of_range);
}

TEST_CASE("one-particle rates match sampled single events") {
    auto env = random_chain(12, 5);
    ChainView c(env);
    const int m = 6;
    DualState start;
    start.particles = {Location::active(c.site(m))};
    const int lower = c.edge_below(m), upper = c.edge_below(m + 1);
    const double total = env.rate(lower) + env.rate(upper);
    const int n = 1000000;
    RngStream rng(8, 8);
    int to_left = 0, to_right = 0;
    for (int k = 0; k < n; ++k) {
        const int e = rng.uniform() * total < env.rate(lower) ? lower : upper;
        const int pos = c.position(dual_step_interior(start, e, env, rng).particles[0].site());
        to_left += pos == m - 1;
        to_right += pos == m + 1;
    }
    auto j = one_particle_jump_rates(env, m);
    const double pl = j.left / total, pr = j.right / total;
    CHECK(std::abs(to_left / double(n) - pl) < 3 * std::sqrt(pl * (1 - pl) / n));
    CHECK(std::abs(to_right / double(n) - pr) < 3 * std::sqrt(pr * (1 - pr) / n));
}

TEST_CASE("gambler's ruin for a homogeneous chain") {
    auto env = homogeneous(20);
    for (int m = 1; m < 20; ++m) {
        CHECK(absorb_prob_one_particle(env, m, BoundaryConvention::martingale).PL ==
              doctest::Approx(m / 20.0).epsilon(1e-12));
        auto lit = absorb_prob_one_particle(env, m);
        CHECK(lit.P0 + lit.PL == doctest::Approx(1.0));
        // full-rate absorption acts as half a bond at each end
        CHECK(lit.PL == doctest::Approx((m - 0.5) / 19.0).epsilon(1e-12));
    }
}

TEST_CASE("tridiagonal solve equals the dense solve") {
    for (auto conv : {BoundaryConvention::literal, BoundaryConvention::martingale}) {
        auto env = random_chain(40, 77);
        std::vector<double> left, right;
        for (int m = 1; m < 40; ++m) {
            auto j = one_particle_jump_rates(env, m, conv);
            left.push_back(j.left);
            right.push_back(j.right);
        }
        auto dense = hit_right_dense(left, right);
        auto fast = absorb_prob_right_all(env, conv);
        for (int m = 0; m <= 40; ++m) CHECK(fast[m] == doctest::Approx(dense[m]).epsilon(1e-11));
    }
}

TEST_CASE("martingale convention reproduces the steady profile exactly") {
    auto env = random_chain(60, 12);
    Profile1D p(env);
    auto h = absorb_prob_right_all(env, BoundaryConvention::martingale);
    for (int m = 0; m <= 60; ++m) CHECK(h[m] == doctest::Approx(p.A_at(m)).epsilon(1e-11));
}

TEST_CASE("Phi is harmonic for interior moves") {
    auto env = random_chain(30, 4);
    Profile1D p(env);
    for (int m = 2; m <= 28; ++m) {
        auto j = one_particle_jump_rates(env, m);
        const double drift = j.left * (p.phi_under(m - 1) - p.phi_under(m)) +
                             j.right * (p.phi_under(m + 1) - p.phi_under(m));
        CHECK(std::abs(drift) < 1e-12 * p.phi_under(30));
    }
}

TEST_CASE("overwhelming boundary rate pulls the particle to that side") {
    std::vector<double> rates(10, 1.0);
    rates[0] = 1e6;
    auto env = make_chain(std::vector<int>(9, 2), rates, 1.0, 1.0);
    CHECK(absorb_prob_one_particle(env, 1).P0 > 0.999);
}

TEST_CASE("pair chain rows are stochastic and factorize when apart") {
    auto env = random_chain(9, 21);
    PairChain chain(env);
    for (int a = 0; a <= 9; ++a) {
        for (int b = 0; b <= 9; ++b) {
            if (chain.absorbed(a, b)) continue;
            double total = 0.0;
            for (const auto& [t, p] : chain.row(a, b)) total += p;
            CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
            const bool active_a = a > 0 && a < 9, active_b = b > 0 && b < 9;
            if (std::abs(a - b) < 2) continue;
            // separated: each step moves one particle with its own rates
            double ra = 0.0, rb = 0.0;
            JumpRates ja{}, jb{};
            if (active_a) ja = one_particle_jump_rates(env, a), ra = ja.left + ja.right;
            if (active_b) jb = one_particle_jump_rates(env, b), rb = jb.left + jb.right;
            const double z = ra + rb;
            for (const auto& [t, p] : chain.row(a, b)) {
                const auto [x, y] = chain.state(t);
                double expect = 0.0;
                if (y == b && x == a - 1) expect = ja.left / z;
                if (y == b && x == a + 1) expect = ja.right / z;
                if (x == a && y == b - 1) expect = jb.left / z;
                if (x == a && y == b + 1) expect = jb.right / z;
                CHECK(p == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("pair absorption: normalization, symmetry and marginals") {
    auto env = random_chain(30, 3);
    auto all = absorb_probs_two_particles_all(env);
    PairChain chain(env);
    auto one = absorb_prob_right_all(env);
    for (int a = 0; a <= 30; ++a) {
        for (int b = 0; b <= 30; ++b) {
            const auto& p = all[chain.index(a, b)];
            CHECK(p.p00 + p.p0L + p.pL0 + p.pLL == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(std::abs(p.pL0 + p.pLL - one[a]) < 1e-9);
            CHECK(std::abs(p.p0L + p.pLL - one[b]) < 1e-9);
        }
        const auto& same = all[chain.index(a, a)];
        CHECK(std::abs(same.p0L - same.pL0) < 1e-12);
    }
}

TEST_CASE("pair absorption agrees with simulated pairs") {
    auto env = random_chain(10, 9);
    ChainView c(env);
    auto exact = absorb_probs_two_particles(env, 4, 5);
    const int L = 10;
    const int right = env.domain().boundary_index(std::span<const int>(&L, 1));
    const int n = 60000;
    auto outcome = run_replicas(n, 4, [&](std::size_t r) {
        RngStream rng(40, r);
        DualState s;
        s.particles = {Location::active(c.site(4)), Location::active(c.site(5))};
        auto run = simulate_dual(env, s, kUntilAbsorbed, rng);
        return 2 * (run.state.particles[0].bath() == right) + (run.state.particles[1].bath() == right);
    });
    const double probs[4] = {exact.p00, exact.p0L, exact.pL0, exact.pLL};
    for (int k = 0; k < 4; ++k) {
        int hits = 0;
        for (int o : outcome) hits += o == k;
        CHECK(std::abs(hits / double(n) - probs[k]) < 4 * std::sqrt(probs[k] * (1 - probs[k]) / n));
    }
}

TEST_CASE("iterative and direct pair solves agree") {
    auto env = random_chain(24, 14);
    auto direct = absorb_probs_two_particles_all(env);
    PairSolverOptions it;
    it.direct_max_L = 0;
    auto iter = absorb_probs_two_particles_all(env, it);
    for (std::size_t s = 0; s < direct.size(); ++s) {
        CHECK(iter[s].pLL == doctest::Approx(direct[s].pLL).epsilon(1e-9));
        CHECK(iter[s].p0L == doctest::Approx(direct[s].p0L).epsilon(1e-9));
    }
    CHECK(iter[0].residual < 1e-10);
}

TEST_CASE("homogeneous pair started together matches the product limit") {
    auto env = homogeneous(100);
    auto p = absorb_probs_two_particles(env, 50, 50);
    const double ratio = (p.pLL + p.p00) / 0.5;
    CHECK(ratio > 0.95);
    CHECK(ratio < 1.05);
}

TEST_CASE("one-particle csv") {
    std::ostringstream os;
    write_one_particle_csv(os, homogeneous(5));
    CHECK(os.str().rfind("start,P0,PL\n1,", 0) == 0);
}

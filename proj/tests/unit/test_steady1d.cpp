#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "kmp/dual.hpp"
#include "kmp/estimate.hpp"
#include "kmp/steady1d.hpp"

using namespace kmp;

namespace {

Environment homogeneous(int L, int omega, double rate, double T0 = 1.0, double T1 = 2.0) {
    std::vector<int> w(L - 1, omega);
    std::vector<double> r(L, rate);
    return make_chain(w, r, T0, T1);
}

// Drift by sampling: pick a touching edge proportional to its rate, apply the
// sampled dual step, and average the change of S and T.
Drift drift_by_sampling(const Environment& env, int a, int b, int n, std::uint64_t seed) {
    ChainView c(env);
    Profile1D p(env);
    auto S = [&](int x, int y) { return p.phi_under(x) * p.phi_under(y) + p.phi_over(x) * p.phi_over(y); };
    auto T = [&](int x, int y) { return p.phi_under(std::max(x, y)) - p.phi_under(std::min(x, y)); };
    std::vector<int> edges;
    for (int m : {a, b})
        for (int e : env.domain().incident_edges(c.site(m))) edges.push_back(e);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    double total = 0.0;
    for (int e : edges) total += env.rate(e);

    DualState start;
    start.particles = {Location::active(c.site(a)), Location::active(c.site(b))};
    RngStream rng(seed, 1);
    std::vector<double> ds(n), dt(n);
    for (int k = 0; k < n; ++k) {
        double pick = rng.uniform() * total;
        std::size_t j = 0;
        while (j + 1 < edges.size() && pick >= env.rate(edges[j])) pick -= env.rate(edges[j++]);
        auto next = dual_step_interior(start, edges[j], env, rng);
        const int x = c.position(next.particles[0].site()), y = c.position(next.particles[1].site());
        ds[k] = S(x, y) - S(a, b);
        dt[k] = T(x, y) - T(a, b);
    }
    return {mean_with_error(ds).mean, mean_with_error(dt).mean};
}

}  // namespace

TEST_CASE("psi on a homogeneous chain") {
    auto env = homogeneous(6, 2, 0.5);
    auto psi = compute_psi(env);
    REQUIRE(psi.size() == 6);
    for (double v : psi) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("psi uses the end conventions for omega") {
    const std::vector<int> w{1, 3};
    const std::vector<double> r{2.0, 1.0, 4.0};
    auto psi = compute_psi(make_chain(w, r, 1.0, 1.0));
    CHECK(psi[0] == doctest::Approx(2.0 / (2.0 * 1 * 1)));
    CHECK(psi[1] == doctest::Approx(4.0 / (1.0 * 1 * 3)));
    CHECK(psi[2] == doctest::Approx(6.0 / (4.0 * 3 * 3)));
}

TEST_CASE("homogeneous profile is the lattice-sampled line") {
    auto env = homogeneous(10, 3, 1.7, 1.0, 2.0);
    Profile1D p(env);
    CHECK(p.A(0.0) == 0.0);
    CHECK(p.A(1.0) == doctest::Approx(1.0));
    CHECK(p.A(0.35) == doctest::Approx(0.3));
    CHECK(p.A(0.3) == doctest::Approx(0.3));
    CHECK(p.u(0.5) == doctest::Approx(1.5));
    CHECK(steady_temperature(env, 0.75) == doctest::Approx(1.7));
    CHECK_THROWS_AS(p.A(1.5), std::domain_error);
}

TEST_CASE("profile is monotone and takes the bath values at the ends") {
    RngStream rng(3, 3);
    const std::vector<int> choices{1, 2, 3};
    auto env = make_iid_chain(50, choices, 0.5, 1.5, 2.0, 0.5, rng);
    Profile1D p(env);
    CHECK(p.u_at(0) == doctest::Approx(2.0));
    CHECK(p.u_at(50) == doctest::Approx(0.5));
    for (int m = 1; m <= 50; ++m) CHECK(p.A_at(m) > p.A_at(m - 1));
}

TEST_CASE("stationary mean temperatures match the profile up to the end bonds") {
    // Stationary means solve a linear system: an interior ring moves the mean
    // at u to omega_u/(omega_u+omega_v) of the pooled mean, a bath ring resets
    // it to omega_u T/2. Solved densely here, independent of psi.
    RngStream rng(4, 4);
    const std::vector<int> choices{1, 2, 4};
    for (int L : {20, 80}) {
        auto env = make_iid_chain(L, choices, 0.3, 2.0, 1.0, 3.0, rng);
        const auto& dom = env.domain();
        const int n = dom.interior_count();
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
        for (int id = 0; id < static_cast<int>(dom.edges().size()); ++id) {
            const Edge& e = dom.edges()[id];
            const double r = env.rate(id), wu = env.omega(e.u);
            if (e.to_bath) {
                M(e.u, e.u) -= r;
                b(e.u) -= r * 0.5 * wu * env.bath_temp(e.v);
            } else {
                const double wv = env.omega(e.v), s = wu + wv;
                M(e.u, e.u) += r * (wu / s - 1.0);
                M(e.u, e.v) += r * wu / s;
                M(e.v, e.v) += r * (wv / s - 1.0);
                M(e.v, e.u) += r * wv / s;
            }
        }
        Eigen::VectorXd mean = M.partialPivLu().solve(b);

        ChainView c(env);
        Profile1D p(env);
        // cumulative resistance with the two end bonds halved
        std::vector<double> R(L + 1, 0.0);
        for (int m = 1; m <= L; ++m) R[m] = R[m - 1] + p.psi(m) * (m == 1 || m == L ? 0.5 : 1.0);
        double worst = 0.0;
        for (int m = 1; m < L; ++m) {
            const double u = 2.0 * mean(c.site(m)) / c.omega(m);
            const double a = R[m] / R[L];
            CHECK(u == doctest::Approx((1 - a) * 1.0 + a * 3.0).epsilon(1e-10));
            worst = std::max(worst, std::abs(u - p.u_at(m)));
        }
        CAPTURE(L);
        CHECK(worst < 20.0 / L);
    }
}

TEST_CASE("limit profiles") {
    SimplexField kappa({0.0, 1.0}, {1.0, 0.0});
    CHECK(limit_A_random_omega(kappa, 0.5) == doctest::Approx(5.0 / 12.0).epsilon(1e-10));
    for (double x : {0.1, 0.3, 0.9}) CHECK(limit_A_random_omega(kappa, x) == doctest::Approx((x * x + 2 * x) / 3));
    SimplexField flat({0.3, 0.7}, {0.3, 0.7});
    CHECK(limit_A_random_omega(flat, 0.4) == doctest::Approx(0.4).epsilon(1e-12));
    auto rho = ScalarField::affine(1.0, {1.0});
    CHECK(limit_A_rho(rho, 0.5) == doctest::Approx(std::log(1.5) / std::log(2.0)).epsilon(1e-10));
    CHECK(limit_A_rho(ScalarField::constant(3.0), 0.2) == doctest::Approx(0.2));
    CHECK_THROWS_AS(limit_A_rho(ScalarField::affine(-0.5, {1.0}), 0.5), std::domain_error);
}

TEST_CASE("printed drifts for the homogeneous chain") {
    auto env = homogeneous(12, 2, 1.0);
    auto same = drift_S_T_printed(env, PairConfig::same_site, 5);
    CHECK(same.dS == doctest::Approx(2.0 / 3.0));
    CHECK(same.dT == doctest::Approx(0.5));
    auto adj = drift_S_T_printed(env, PairConfig::adjacent, 5);
    CHECK(adj.dS == doctest::Approx(-1.0 / 9.0));
    CHECK(adj.dS < 0.0);
    CHECK(adj.dT == doctest::Approx(2.0 / 9.0));
}

TEST_CASE("exact drifts for the homogeneous chain") {
    // omega = 2, r = 1, psi = 1, q uniform. Same site: S grows by 2 E[q^2] = 2/3
    // and T becomes 1 when the pair separates, 2 E[q(1-q)] = 1/3 on either edge.
    // Adjacent: the shared edge (prob 1/3) reunites the pair w.p. 2/3, T -1;
    // each outer edge (prob 1/3) moves its particle away w.p. 1/2, T +1.
    // So dT = -2/9 + 1/3 = 1/9.
    auto env = homogeneous(12, 2, 1.0);
    auto same = drift_S_T_exact(env, PairConfig::same_site, 5);
    CHECK(same.dS == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(same.dT == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    auto adj = drift_S_T_exact(env, PairConfig::adjacent, 5);
    CHECK(adj.dS == doctest::Approx(-1.0 / 9.0).epsilon(1e-12));
    CHECK(adj.dT == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("exact drifts agree with one-step sampling on a random chain") {
    RngStream rng(10, 10);
    const std::vector<int> choices{1, 2, 3, 5};
    auto env = make_iid_chain(14, choices, 0.4, 2.5, 1.0, 1.0, rng);
    for (auto config : {PairConfig::same_site, PairConfig::adjacent}) {
        for (int i : {3, 7, 10}) {
            const int b = config == PairConfig::same_site ? i : i + 1;
            auto exact = drift_S_T_exact(env, config, i);
            const int n = 400000;
            auto mc = drift_by_sampling(env, i, b, n, 100 + i);
            Profile1D p(env);
            const double scale = p.phi_under(14) * p.phi_under(14);
            CAPTURE(i);
            CHECK(std::abs(mc.dS - exact.dS) < 6.0 * scale / std::sqrt(double(n)));
            CHECK(std::abs(mc.dT - exact.dT) < 6.0 * p.phi_under(14) / std::sqrt(double(n)));
        }
    }
}

TEST_CASE("drift needs room from the baths") {
    auto env = homogeneous(8, 2, 1.0);
    CHECK_THROWS_AS(drift_S_T(env, PairConfig::same_site, 1), std::domain_error);
    CHECK_THROWS_AS(drift_S_T(env, PairConfig::adjacent, 6), std::domain_error);
    CHECK_NOTHROW(drift_S_T(env, PairConfig::adjacent, 5));
}

TEST_CASE("profile csv has one row per bond") {
    auto env = homogeneous(4, 2, 1.0);
    std::ostringstream os;
    write_profile_csv(os, Profile1D(env));
    const std::string s = os.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 5);
    CHECK(s.rfind("m,psi,phi_under,A,u\n", 0) == 0);
}

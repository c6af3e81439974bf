#include "kmp/absorption.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "kmp/csv.hpp"
#include "kmp/dual.hpp"

namespace kmp {

double hitting_prob_network(const ResistorChain& chain) {
    if (!(chain.A < chain.start && chain.start < chain.B))
        throw std::invalid_argument("resistor chain needs A < start < B");
    if (static_cast<int>(chain.resistance.size()) != chain.B - chain.A)
        throw std::invalid_argument("resistor chain needs one resistance per bond");
    double total = 0.0, beyond = 0.0;
    for (int i = chain.A; i < chain.B; ++i) {
        const double R = chain.resistance[i - chain.A];
        if (!(R > 0.0)) throw std::invalid_argument("resistances must be positive");
        total += R;
        if (i >= chain.start) beyond += R;
    }
    return beyond / total;
}

JumpRates one_particle_jump_rates(const Environment& env, int m, BoundaryConvention conv) {
    ChainView c(env);
    if (m < 1 || m > c.L() - 1) throw std::out_of_range("jump rates need 1 <= m <= L-1");
    const double half = conv == BoundaryConvention::martingale ? 0.5 : 1.0;
    const double w = c.omega(m);
    JumpRates j;
    j.left = m == 1 ? half * c.rate_below(1)
                    : c.rate_below(m) * c.omega(m - 1) / (w + c.omega(m - 1));
    j.right = m == c.L() - 1 ? half * c.rate_below(c.L())
                             : c.rate_below(m + 1) * c.omega(m + 1) / (w + c.omega(m + 1));
    return j;
}

std::vector<double> absorb_prob_right_all(const Environment& env, BoundaryConvention conv) {
    ChainView c(env);
    const int L = c.L();
    std::vector<double> h(L + 1, 0.0);
    h[L] = 1.0;
    const int n = L - 1;
    if (n <= 0) return h;
    // (l + r) h_m - l h_{m-1} - r h_{m+1} = 0, forward sweep of the Thomas algorithm
    std::vector<double> cp(n), dp(n);
    for (int k = 0; k < n; ++k) {
        const JumpRates j = one_particle_jump_rates(env, k + 1, conv);
        const double diag = j.left + j.right;
        const double sub = k > 0 ? -j.left : 0.0;
        const double sup = k < n - 1 ? -j.right : 0.0;
        const double rhs = k == n - 1 ? j.right : 0.0;
        const double denom = diag - (k > 0 ? sub * cp[k - 1] : 0.0);
        cp[k] = sup / denom;
        dp[k] = (rhs - (k > 0 ? sub * dp[k - 1] : 0.0)) / denom;
    }
    h[n] = dp[n - 1];
    for (int k = n - 2; k >= 0; --k) h[k + 1] = dp[k] - cp[k] * h[k + 2];
    return h;
}

OneParticleAbsorption absorb_prob_one_particle(const Environment& env, int start, BoundaryConvention conv) {
    ChainView c(env);
    if (start < 0 || start > c.L()) throw std::out_of_range("start outside 0..L");
    const double pL = absorb_prob_right_all(env, conv)[start];
    return {1.0 - pL, pL};
}

PairChain::PairChain(const Environment& env) {
    ChainView c(env);
    L_ = c.L();
    const LatticeDomain& dom = env.domain();
    const int lo = 0, hi = L_;
    const int bath_lo = dom.boundary_index(std::span<const int>(&lo, 1));
    const int bath_hi = dom.boundary_index(std::span<const int>(&hi, 1));

    auto to_location = [&](int m) {
        if (m == 0) return Location::absorbed(bath_lo);
        if (m == L_) return Location::absorbed(bath_hi);
        return Location::active(c.site(m));
    };
    auto to_position = [&](Location loc) {
        if (loc.is_active()) return c.position(loc.site());
        return loc.bath() == bath_lo ? 0 : L_;
    };

    rows_.resize(state_count());
    for (int a = 0; a <= L_; ++a) {
        for (int b = 0; b <= L_; ++b) {
            if (absorbed(a, b)) continue;
            const std::vector<Location> here{to_location(a), to_location(b)};
            std::vector<int> edges;
            for (const Location& loc : here)
                if (loc.is_active())
                    for (int e : dom.incident_edges(loc.site())) edges.push_back(e);
            std::sort(edges.begin(), edges.end());
            edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

            std::map<int, double> acc;
            const int self = index(a, b);
            for (int e : edges) {
                for (const RingOutcome& o : ring_outcomes(env, here, e)) {
                    const int target = index(to_position(o.particles[0]), to_position(o.particles[1]));
                    if (target != self) acc[target] += env.rate(e) * o.prob;
                }
            }
            double total = 0.0;
            for (const auto& [t, w] : acc) total += w;
            auto& row = rows_[self];
            for (const auto& [t, w] : acc) row.emplace_back(t, w / total);
        }
    }
}

namespace {

std::vector<PairAbsorption> solve_pair(const PairChain& chain, const PairSolverOptions& opts) {
    const int n = chain.state_count();
    const int L = chain.L();
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 4);
    for (int s = 0; s < n; ++s) {
        const auto [a, b] = chain.state(s);
        triplets.emplace_back(s, s, 1.0);
        if (chain.absorbed(a, b)) {
            rhs(s, (a == L ? 2 : 0) + (b == L ? 1 : 0)) = 1.0;
            continue;
        }
        for (const auto& [t, p] : chain.row(a, b)) triplets.emplace_back(s, t, -p);
    }
    Eigen::SparseMatrix<double> M(n, n);
    M.setFromTriplets(triplets.begin(), triplets.end());
    M.makeCompressed();

    Eigen::MatrixXd x(n, 4);
    if (L <= opts.direct_max_L) {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(M);
        if (lu.info() != Eigen::Success) throw SolverError("pair chain: sparse LU factorization failed");
        x = lu.solve(rhs);
    } else {
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it;
        it.preconditioner().setDroptol(1e-6);
        it.preconditioner().setFillfactor(20);
        it.setTolerance(opts.tolerance * 1e-2);
        it.setMaxIterations(20000);
        it.compute(M);
        if (it.info() != Eigen::Success) throw SolverError("pair chain: preconditioner setup failed");
        for (int k = 0; k < 4; ++k) x.col(k) = it.solve(rhs.col(k));
    }

    double residual = 0.0;
    for (int k = 0; k < 4; ++k) {
        const double norm = std::max(rhs.col(k).norm(), 1.0);
        residual = std::max(residual, (M * x.col(k) - rhs.col(k)).norm() / norm);
    }
    if (!(residual < opts.tolerance)) {
        std::ostringstream msg;
        msg << "pair chain: solve did not reach tolerance, residual " << residual;
        throw SolverError(msg.str());
    }

    std::vector<PairAbsorption> out(n);
    for (int s = 0; s < n; ++s) out[s] = {x(s, 0), x(s, 1), x(s, 2), x(s, 3), residual};
    return out;
}

}  // namespace

std::vector<PairAbsorption> absorb_probs_two_particles_all(const Environment& env,
                                                           const PairSolverOptions& opts) {
    return solve_pair(PairChain(env), opts);
}

PairAbsorption absorb_probs_two_particles(const Environment& env, int a, int b, const PairSolverOptions& opts) {
    PairChain chain(env);
    if (a < 0 || a > chain.L() || b < 0 || b > chain.L()) throw std::out_of_range("start outside 0..L");
    return solve_pair(chain, opts)[chain.index(a, b)];
}

void write_one_particle_csv(std::ostream& os, const Environment& env, BoundaryConvention conv) {
    const std::vector<double> h = absorb_prob_right_all(env, conv);
    CsvWriter w(os);
    w.header({"start", "P0", "PL"});
    for (int m = 1; m + 1 < static_cast<int>(h.size()); ++m) w.row(m, 1.0 - h[m], h[m]);
}

}  // namespace kmp

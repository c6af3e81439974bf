#include "kmp/steady1d.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kmp/csv.hpp"
#include "kmp/dual.hpp"

namespace kmp {

namespace {

void require_chain(const Environment& env) {
    const Box& box = env.domain().box();
    if (box.dim() != 1 || box.lo[0] != 0.0 || box.hi[0] != 1.0)
        throw std::domain_error("steady-state analytics need a chain on (0,1)");
}

double integrate(auto&& f, double a, double b) {
    if (b <= a) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-10);
}

}  // namespace

std::vector<double> compute_psi(const Environment& env) {
    require_chain(env);
    ChainView chain(env);
    std::vector<double> psi(chain.L());
    for (int m = 1; m <= chain.L(); ++m) {
        const double a = chain.omega(m - 1);
        const double b = chain.omega(m);
        psi[m - 1] = (a + b) / (chain.rate_below(m) * a * b);
    }
    return psi;
}

Profile1D::Profile1D(const Environment& env) {
    std::vector<double> psi = compute_psi(env);
    ChainView chain(env);
    L_ = chain.L();
    T0_ = chain.T0();
    T1_ = chain.T1();
    psi_.assign(L_ + 1, 0.0);
    phi_.assign(L_ + 1, 0.0);
    for (int m = 1; m <= L_; ++m) {
        psi_[m] = psi[m - 1];
        phi_[m] = phi_[m - 1] + psi_[m];
    }
}

int lattice_floor(double x, int L) {
    const double y = x * L;
    const double r = std::round(y);
    const double f = std::abs(y - r) <= 1e-9 * std::max(1.0, std::abs(y)) ? r : std::floor(y);
    return static_cast<int>(f);
}

double Profile1D::A(double x) const {
    if (x < 0.0 || x > 1.0) throw std::domain_error("A is defined on [0,1]");
    return A_at(std::clamp(lattice_floor(x, L_), 0, L_));
}

double Profile1D::u(double x) const {
    const double a = A(x);
    return (1.0 - a) * T0_ + a * T1_;
}

double profile_A(const Environment& env, double x) { return Profile1D(env).A(x); }
double steady_temperature(const Environment& env, double x) { return Profile1D(env).u(x); }

double limit_A_random_omega(const SimplexField& kappa, double x) {
    if (x < 0.0 || x > 1.0) throw std::domain_error("x must lie in [0,1]");
    auto weight = [&](double y) {
        double s = 0.0;
        for (int i = 1; i <= kappa.size(); ++i) s += kappa(i, y) / i;
        return s;
    };
    return integrate(weight, 0.0, x) / integrate(weight, 0.0, 1.0);
}

double limit_A_rho(const ScalarField& rho, double x) {
    if (x < 0.0 || x > 1.0) throw std::domain_error("x must lie in [0,1]");
    auto inv = [&](double y) {
        const double r = rho(y);
        if (!(r > 0.0)) throw std::domain_error("rho must be positive");
        return 1.0 / r;
    };
    return integrate(inv, 0.0, x) / integrate(inv, 0.0, 1.0);
}

namespace {

struct DriftSetup {
    ChainView chain;
    Profile1D profile;
    int a;
    int b;
};

DriftSetup drift_setup(const Environment& env, PairConfig config, int i) {
    require_chain(env);
    ChainView chain(env);
    const int b = config == PairConfig::same_site ? i : i + 1;
    if (i < 2 || b > chain.L() - 2)
        throw std::domain_error("drift needs both particles at least two sites from the baths");
    return {chain, Profile1D(env), i, b};
}

double S_of(const Profile1D& p, int a, int b) {
    return p.phi_under(a) * p.phi_under(b) + p.phi_over(a) * p.phi_over(b);
}

double T_of(const Profile1D& p, int a, int b) {
    return p.phi_under(std::max(a, b)) - p.phi_under(std::min(a, b));
}

}  // namespace

Drift drift_S_T_printed(const Environment& env, PairConfig config, int i) {
    const DriftSetup s = drift_setup(env, config, i);
    const ChainView& c = s.chain;
    const double wm = c.omega(i - 1), w = c.omega(i), wp = c.omega(i + 1);
    const double rm = c.rate_below(i), rp = c.rate_below(i + 1);
    Drift d;
    if (config == PairConfig::same_site) {
        const double psi = s.profile.psi(i);
        d.dS = 2.0 * psi * psi *
               (rp / (rm + rp) * wp * (wp + 2.0) / ((w + wp) * (w + wp + 2.0)) +
                rm / (rm + rp) * wm * (wm + 2.0) / ((wm + w) * (wm + w + 2.0)));
        d.dT = s.profile.psi(i + 1) * rp / (rm + rp) * w * wp / (w + wp);
    } else {
        const double rpp = c.rate_below(i + 2);
        const double psi = s.profile.psi(i + 1);
        d.dS = -psi * psi * 2.0 * rp / (rm + rp + rpp) * w * wp / ((w + wp) * (w + wp + 2.0));
        d.dT = psi / 3.0 * w * wp / (w + wp + 2.0);
    }
    return d;
}

Drift drift_S_T_exact(const Environment& env, PairConfig config, int i) {
    const DriftSetup s = drift_setup(env, config, i);
    const ChainView& c = s.chain;
    const LatticeDomain& dom = env.domain();
    const std::vector<Location> start{Location::active(c.site(s.a)), Location::active(c.site(s.b))};

    std::vector<int> edges;
    for (const Location& loc : start)
        for (int e : dom.incident_edges(loc.site())) edges.push_back(e);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    double total = 0.0;
    for (int e : edges) total += env.rate(e);

    const double S0 = S_of(s.profile, s.a, s.b);
    const double T0 = T_of(s.profile, s.a, s.b);
    Drift d;
    for (int e : edges) {
        const double w = env.rate(e) / total;
        for (const RingOutcome& o : ring_outcomes(env, start, e)) {
            // the setup keeps both particles away from the bath edges
            const int a = c.position(o.particles[0].site());
            const int b = c.position(o.particles[1].site());
            d.dS += w * o.prob * (S_of(s.profile, a, b) - S0);
            d.dT += w * o.prob * (T_of(s.profile, a, b) - T0);
        }
    }
    return d;
}

DriftReport drift_S_T(const Environment& env, PairConfig config, int i) {
    return {drift_S_T_printed(env, config, i), drift_S_T_exact(env, config, i)};
}

void write_profile_csv(std::ostream& os, const Profile1D& profile) {
    CsvWriter w(os);
    w.header({"m", "psi", "phi_under", "A", "u"});
    for (int m = 1; m <= profile.L(); ++m)
        w.row(m, profile.psi(m), profile.phi_under(m), profile.A_at(m), profile.u_at(m));
}

}  // namespace kmp

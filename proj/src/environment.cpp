#include "kmp/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace kmp {

namespace {

// Tolerance used when deciding whether L*lo lands exactly on an integer.
constexpr double kGridEps = 1e-9;

}  // namespace

LatticeDomain::LatticeDomain(int L, Box box) : dim_(box.dim()), L_(L), box_(std::move(box)) {
    if (dim_ < 1 || box_.hi.size() != box_.lo.size()) {
        throw ConstructionError("box must have matching lo/hi bounds of dimension >= 1");
    }
    if (L < 1) throw ConstructionError("scale L must be at least 1");

    lo_.resize(dim_);
    extent_.resize(dim_);
    std::vector<int> vmin(dim_), vmax(dim_);
    for (int a = 0; a < dim_; ++a) {
        if (!(box_.lo[a] < box_.hi[a])) throw ConstructionError("box has an empty side");
        vmin[a] = static_cast<int>(std::floor(box_.lo[a] * L + kGridEps)) + 1;
        vmax[a] = static_cast<int>(std::ceil(box_.hi[a] * L - kGridEps)) - 1;
        if (vmin[a] > vmax[a]) {
            std::ostringstream msg;
            msg << "box at scale L=" << L << " has no interior lattice sites along axis " << a;
            throw ConstructionError(msg.str());
        }
        lo_[a] = vmin[a] - 1;
        extent_[a] = vmax[a] - vmin[a] + 3;
    }

    std::size_t cells = 1;
    for (int e : extent_) cells *= static_cast<std::size_t>(e);
    code_.assign(cells, -1);

    // Interior sites in lexicographic order (axis 0 most significant).
    std::vector<int> coord(vmin);
    auto advance = [&](std::vector<int>& c, const std::vector<int>& from,
                       const std::vector<int>& to) {
        for (int a = dim_ - 1; a >= 0; --a) {
            if (++c[a] <= to[a]) return true;
            c[a] = from[a];
        }
        return false;
    };
    int n_interior = 0;
    do {
        interior_.insert(interior_.end(), coord.begin(), coord.end());
        code_[static_cast<std::size_t>(cell_code(coord))] = n_interior++;
    } while (advance(coord, vmin, vmax));

    // Boundary layer: padded-grid cells adjacent to an interior site.
    std::vector<int> pmin(lo_), pmax(dim_);
    for (int a = 0; a < dim_; ++a) pmax[a] = lo_[a] + extent_[a] - 1;
    coord = pmin;
    int n_boundary = 0;
    do {
        auto cell = static_cast<std::size_t>(cell_code(coord));
        if (code_[cell] >= 0) continue;
        bool adjacent = false;
        for (int a = 0; a < dim_ && !adjacent; ++a) {
            for (int step : {-1, 1}) {
                coord[a] += step;
                bool inside_grid = coord[a] >= pmin[a] && coord[a] <= pmax[a];
                if (inside_grid && code_[static_cast<std::size_t>(cell_code(coord))] >= 0) adjacent = true;
                coord[a] -= step;
            }
        }
        if (adjacent) {
            boundary_.insert(boundary_.end(), coord.begin(), coord.end());
            code_[cell] = -(n_boundary++ + 2);
        }
    } while (advance(coord, pmin, pmax));

    // Edges, enumerated from each interior site in order.
    for (int i = 0; i < n_interior; ++i) {
        std::vector<int> c(interior_site(i).begin(), interior_site(i).end());
        for (int a = 0; a < dim_; ++a) {
            c[a] -= 1;
            int below = code_[static_cast<std::size_t>(cell_code(c))];
            if (below <= -2) edges_.push_back({i, -below - 2, true});
            c[a] += 2;
            int above = code_[static_cast<std::size_t>(cell_code(c))];
            if (above >= 0) {
                edges_.push_back({i, above, false});
                ++interior_edge_count_;
            } else if (above <= -2) {
                edges_.push_back({i, -above - 2, true});
            }
            c[a] -= 1;
        }
    }

    incident_offset_.assign(static_cast<std::size_t>(n_interior) + 1, 0);
    for (const auto& e : edges_) {
        ++incident_offset_[e.u + 1];
        if (!e.to_bath) ++incident_offset_[e.v + 1];
    }
    for (int i = 0; i < n_interior; ++i) incident_offset_[i + 1] += incident_offset_[i];
    incident_.resize(static_cast<std::size_t>(incident_offset_.back()));
    std::vector<int> fill(incident_offset_.begin(), incident_offset_.end() - 1);
    for (int id = 0; id < static_cast<int>(edges_.size()); ++id) {
        const auto& e = edges_[id];
        incident_[fill[e.u]++] = id;
        if (!e.to_bath) incident_[fill[e.v]++] = id;
    }
}

int LatticeDomain::cell_code(std::span<const int> coord) const {
    int idx = 0;
    for (int a = 0; a < dim_; ++a) idx = idx * extent_[a] + (coord[a] - lo_[a]);
    return idx;
}

std::vector<double> LatticeDomain::interior_position(int i) const {
    auto s = interior_site(i);
    std::vector<double> x(dim_);
    for (int a = 0; a < dim_; ++a) x[a] = static_cast<double>(s[a]) / L_;
    return x;
}

std::vector<double> LatticeDomain::boundary_position(int b) const {
    auto s = boundary_site(b);
    std::vector<double> x(dim_);
    for (int a = 0; a < dim_; ++a) x[a] = static_cast<double>(s[a]) / L_;
    return x;
}

int LatticeDomain::interior_index(std::span<const int> coord) const {
    for (int a = 0; a < dim_; ++a) {
        if (coord[a] < lo_[a] || coord[a] >= lo_[a] + extent_[a]) return -1;
    }
    int c = code_[static_cast<std::size_t>(cell_code(coord))];
    return c >= 0 ? c : -1;
}

int LatticeDomain::boundary_index(std::span<const int> coord) const {
    for (int a = 0; a < dim_; ++a) {
        if (coord[a] < lo_[a] || coord[a] >= lo_[a] + extent_[a]) return -1;
    }
    int c = code_[static_cast<std::size_t>(cell_code(coord))];
    return c <= -2 ? -c - 2 : -1;
}

int LatticeDomain::nearest_interior(std::span<const double> x) const {
    std::vector<int> c(dim_);
    for (int a = 0; a < dim_; ++a) c[a] = static_cast<int>(std::lround(x[a] * L_));
    int i = interior_index(c);
    if (i < 0) throw ConstructionError("macroscopic point does not round to an interior site");
    return i;
}

LatticeDomain build_box_domain(int L, const Box& box) { return LatticeDomain(L, box); }

// ---------------------------------------------------------------------------

ScalarField ScalarField::constant(double c) {
    ScalarField f;
    f.kind = Kind::constant;
    f.c0 = c;
    return f;
}

ScalarField ScalarField::affine(double c0, std::vector<double> grad) {
    ScalarField f;
    f.kind = Kind::affine;
    f.c0 = c0;
    f.grad = std::move(grad);
    return f;
}

ScalarField ScalarField::exponential(double c0, std::vector<double> grad) {
    ScalarField f;
    f.kind = Kind::exponential;
    f.c0 = c0;
    f.grad = std::move(grad);
    return f;
}

ScalarField ScalarField::affine_bump(double c0, std::vector<double> grad, double amplitude, Box box) {
    ScalarField f;
    f.kind = Kind::affine_bump;
    f.c0 = c0;
    f.grad = std::move(grad);
    f.amplitude = amplitude;
    f.bump_box = std::move(box);
    return f;
}

double ScalarField::operator()(std::span<const double> x) const {
    double lin = 0.0;
    for (std::size_t a = 0; a < grad.size() && a < x.size(); ++a) lin += grad[a] * x[a];
    switch (kind) {
        case Kind::constant:
            return c0;
        case Kind::affine:
            return c0 + lin;
        case Kind::exponential:
            return c0 * std::exp(lin);
        case Kind::affine_bump: {
            double bump = amplitude;
            for (int a = 0; a < bump_box.dim() && a < static_cast<int>(x.size()); ++a) {
                double s = (x[a] - bump_box.lo[a]) / (bump_box.hi[a] - bump_box.lo[a]);
                bump *= (s <= 0.0 || s >= 1.0) ? 0.0 : std::sin(std::numbers::pi * s);
            }
            return c0 + lin + bump;
        }
    }
    return c0;
}

SimplexField::SimplexField(std::vector<double> p0, std::vector<double> p1)
    : at0(std::move(p0)), at1(std::move(p1)) {
    if (at0.empty() || at0.size() != at1.size()) {
        throw ConstructionError("kappa endpoints must be non-empty and of equal length");
    }
    for (const auto* p : {&at0, &at1}) {
        double sum = 0.0;
        for (double v : *p) {
            if (v < 0.0) throw ConstructionError("kappa has a negative component");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConstructionError("kappa does not sum to 1");
    }
}

const char* scenario_name(const ScenarioSpec& spec) {
    static constexpr const char* names[] = {"constant",       "smooth_rate",  "halfspace_omega",
                                            "halfspace_rate", "random_omega", "macroscopic_rate"};
    return names[spec.index()];
}

// ---------------------------------------------------------------------------

Environment::Environment(LatticeDomain domain, std::vector<int> omega, std::vector<double> rate,
                         std::vector<double> bath_temp)
    : domain_(std::move(domain)),
      omega_(std::move(omega)),
      rate_(std::move(rate)),
      bath_temp_(std::move(bath_temp)) {
    if (static_cast<int>(omega_.size()) != domain_.interior_count() ||
        rate_.size() != domain_.edges().size() ||
        static_cast<int>(bath_temp_.size()) != domain_.boundary_count()) {
        throw ConstructionError("environment field sizes do not match the domain");
    }
    for (int w : omega_) {
        if (w < 1) throw ConstructionError("degrees of freedom must be >= 1");
    }
    rate_min_ = rate_.empty() ? 0.0 : rate_.front();
    rate_max_ = rate_min_;
    for (double r : rate_) {
        if (!(r > 0.0) || !std::isfinite(r)) throw ConstructionError("edge rates must be positive and finite");
        rate_min_ = std::min(rate_min_, r);
        rate_max_ = std::max(rate_max_, r);
        total_rate_ += r;
    }
    for (double t : bath_temp_) {
        if (!(t >= 0.0) || !std::isfinite(t)) throw ConstructionError("bath temperatures must be >= 0");
    }
}

namespace {

std::vector<double> edge_midpoint(const LatticeDomain& dom, const Edge& e) {
    auto u = dom.interior_site(e.u);
    auto v = e.to_bath ? dom.boundary_site(e.v) : dom.interior_site(e.v);
    std::vector<double> m(dom.dim());
    for (int a = 0; a < dom.dim(); ++a) m[a] = (u[a] + v[a]) / (2.0 * dom.scale());
    return m;
}

std::vector<double> bath_temperatures(const LatticeDomain& dom, const ScalarField& T) {
    std::vector<double> temps(dom.boundary_count());
    for (int b = 0; b < dom.boundary_count(); ++b) temps[b] = T(dom.boundary_position(b));
    return temps;
}

void require_positive_field(double value, const char* what) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw ConstructionError(std::string(what) + " must be positive wherever it is evaluated");
    }
}

void require_unit_chain(const LatticeDomain& dom, const char* what) {
    if (dom.dim() != 1) throw ConstructionError(std::string(what) + " is defined for d = 1 only");
}

}  // namespace

Environment build_scenario(const ScenarioSpec& spec, const LatticeDomain& dom, RngStream& rng) {
    const int n = dom.interior_count();
    const auto& edges = dom.edges();
    std::vector<int> omega(n);
    std::vector<double> rate(edges.size());

    return std::visit(
        [&](const auto& s) -> Environment {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, scenario::Constant>) {
                std::fill(omega.begin(), omega.end(), s.omega);
                std::fill(rate.begin(), rate.end(), s.rate);
            } else if constexpr (std::is_same_v<S, scenario::SmoothRate>) {
                std::fill(omega.begin(), omega.end(), s.omega);
                for (std::size_t k = 0; k < edges.size(); ++k) {
                    rate[k] = s.rate_field(edge_midpoint(dom, edges[k]));
                    require_positive_field(rate[k], "rate field R");
                }
            } else if constexpr (std::is_same_v<S, scenario::HalfspaceOmega>) {
                for (int i = 0; i < n; ++i) omega[i] = dom.interior_site(i)[0] < 0 ? s.omega_neg : s.omega_pos;
                std::fill(rate.begin(), rate.end(), s.rate);
            } else if constexpr (std::is_same_v<S, scenario::HalfspaceRate>) {
                std::fill(omega.begin(), omega.end(), s.omega);
                for (std::size_t k = 0; k < edges.size(); ++k) {
                    const auto& e = edges[k];
                    int u1 = dom.interior_site(e.u)[0];
                    int v1 = e.to_bath ? dom.boundary_site(e.v)[0] : dom.interior_site(e.v)[0];
                    rate[k] = (u1 + v1 < 0) ? s.rate_neg : s.rate_pos;
                }
            } else if constexpr (std::is_same_v<S, scenario::RandomOmega>) {
                require_unit_chain(dom, "random_omega");
                for (int i = 0; i < n; ++i) {
                    double y = dom.interior_position(i)[0];
                    double u = rng.uniform();
                    int choice = s.kappa.size();
                    double cum = 0.0;
                    for (int k = 1; k <= s.kappa.size(); ++k) {
                        cum += s.kappa(k, y);
                        if (u < cum) {
                            choice = k;
                            break;
                        }
                    }
                    omega[i] = choice;
                }
                std::fill(rate.begin(), rate.end(), s.rate);
            } else if constexpr (std::is_same_v<S, scenario::MacroscopicRate>) {
                require_unit_chain(dom, "macroscopic_rate");
                std::fill(omega.begin(), omega.end(), s.omega);
                for (std::size_t k = 0; k < edges.size(); ++k) {
                    const auto& e = edges[k];
                    int u1 = dom.interior_site(e.u)[0];
                    int v1 = e.to_bath ? dom.boundary_site(e.v)[0] : dom.interior_site(e.v)[0];
                    rate[k] = s.rho(static_cast<double>(std::min(u1, v1)) / dom.scale());
                    require_positive_field(rate[k], "rate profile rho");
                }
            }
            return Environment(dom, std::move(omega), std::move(rate), bath_temperatures(dom, s.temperature));
        },
        spec);
}

// ---------------------------------------------------------------------------

ChainView::ChainView(const Environment& env) {
    const auto& dom = env.domain();
    if (dom.dim() != 1) throw std::domain_error("ChainView requires a one-dimensional environment");
    L_ = dom.scale();
    if (dom.interior_count() != L_ - 1 || dom.interior_site(0)[0] != 1 || dom.boundary_count() != 2) {
        throw std::domain_error("ChainView requires the chain 1..L-1 with baths at 0 and L");
    }
    omega_.assign(L_ + 1, 0);
    rate_.assign(L_ + 1, 0.0);
    site_.assign(L_ + 1, -1);
    edge_.assign(L_ + 1, -1);
    position_.assign(L_ - 1, 0);
    for (int i = 0; i < L_ - 1; ++i) {
        int m = dom.interior_site(i)[0];
        site_[m] = i;
        position_[i] = m;
        omega_[m] = env.omega(i);
    }
    omega_[0] = omega_[1];
    omega_[L_] = omega_[L_ - 1];
    const auto& edges = dom.edges();
    for (int id = 0; id < static_cast<int>(edges.size()); ++id) {
        const auto& e = edges[id];
        int a = dom.interior_site(e.u)[0];
        int b = e.to_bath ? dom.boundary_site(e.v)[0] : dom.interior_site(e.v)[0];
        int upper = std::max(a, b);
        rate_[upper] = env.rate(id);
        edge_[upper] = id;
    }
    int left = dom.boundary_index(std::vector<int>{0});
    int right = dom.boundary_index(std::vector<int>{L_});
    T0_ = env.bath_temp(left);
    T1_ = env.bath_temp(right);
}

Environment make_chain(std::span<const int> omega, std::span<const double> rate_below, double T0,
                       double T1) {
    const int L = static_cast<int>(omega.size()) + 1;
    if (static_cast<int>(rate_below.size()) != L) {
        throw ConstructionError("make_chain: need L rates for L-1 sites");
    }
    LatticeDomain dom(L, Box::unit_interval());
    std::vector<double> rate(dom.edges().size());
    for (std::size_t k = 0; k < rate.size(); ++k) {
        const auto& e = dom.edges()[k];
        int a = dom.interior_site(e.u)[0];
        int b = e.to_bath ? dom.boundary_site(e.v)[0] : dom.interior_site(e.v)[0];
        rate[k] = rate_below[std::max(a, b) - 1];
    }
    std::vector<double> temps(2);
    temps[dom.boundary_index(std::vector<int>{0})] = T0;
    temps[dom.boundary_index(std::vector<int>{L})] = T1;
    return Environment(std::move(dom), std::vector<int>(omega.begin(), omega.end()), std::move(rate),
                       std::move(temps));
}

Environment make_iid_chain(int L, std::span<const int> omega_choices, double rate_lo, double rate_hi,
                           double T0, double T1, RngStream& rng) {
    if (omega_choices.empty()) throw ConstructionError("make_iid_chain: no omega choices");
    std::vector<int> omega(L - 1);
    for (auto& w : omega) w = omega_choices[rng.below(omega_choices.size())];
    std::vector<double> rate(L);
    for (auto& r : rate) r = rate_lo + (rate_hi - rate_lo) * rng.uniform();
    return make_chain(omega, rate, T0, T1);
}

std::vector<ScenarioCatalogEntry> scenario_catalog() {
    return {
        {"constant",
         "homogeneous reference; equilibrium when T is constant, linear steady profile otherwise",
         "omega: int >= 1; rate: real > 0; temperature: field"},
        {"smooth_rate",
         "constant omega with edge rates R((u+v)/2L); hydrodynamic limit u_t = div(R grad u)",
         "rate_field: field (positive); omega: int >= 1; temperature: field"},
        {"halfspace_omega",
         "omega jumps across x_1 = 0 (omega_neg for v_1 < 0); interface flux matching weighted by omega",
         "omega_neg: int >= 1; omega_pos: int >= 1; rate: real > 0; temperature: field"},
        {"halfspace_rate",
         "rate jumps across x_1 = 0 (rate_neg when u_1 + v_1 < 0); interface flux matching weighted by rate",
         "rate_neg: real > 0; rate_pos: real > 0; omega: int >= 1; temperature: field"},
        {"random_omega",
         "d = 1, omega_v drawn independently with P(omega_v = i) = kappa_i(v/L); quenched steady profile",
         "kappa: {at0: simplex, at1: simplex}; rate: real > 0; temperature: field"},
        {"macroscopic_rate",
         "d = 1, r_{v+1/2} = rho(v/L); steady profile int_0^x 1/rho / int_0^1 1/rho",
         "rho: field (positive on [0,1]); omega: int >= 1; temperature: field"},
    };
}

}  // namespace kmp

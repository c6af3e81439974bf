#include "kmp/pde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <Eigen/SparseCholesky>

#include "kmp/csv.hpp"

namespace kmp {

namespace {

constexpr double kGridTol = 1e-9;

enum class Side { neg, interface, pos };

// Grid geometry shared by assembly and the solution object.
struct Grid {
    int dim;
    std::vector<int> nodes;
    std::vector<int> stride;
    std::vector<double> lo;
    double h;
    int total;

    Grid(const PdeProblem& p) : dim(p.box.dim()), lo(p.box.lo), h(p.h) {
        if (!(h > 0.0)) throw ConstructionError("grid step must be positive");
        nodes.resize(dim);
        for (int a = 0; a < dim; ++a) {
            const double cells = (p.box.hi[a] - p.box.lo[a]) / h;
            const int n = static_cast<int>(std::lround(cells));
            if (n < 2 || std::abs(cells - n) > kGridTol * std::max(1.0, cells))
                throw ConstructionError("grid step must divide every side of the box into at least two cells");
            nodes[a] = n + 1;
        }
        if (p.kind != CoefficientKind::smooth) {
            const double k = -p.box.lo[0] / h;
            if (!(p.box.lo[0] < 0.0 && p.box.hi[0] > 0.0) || std::abs(k - std::lround(k)) > kGridTol * std::max(1.0, k))
                throw ConstructionError("interface problems need a grid line on x_1 = 0");
        }
        stride.assign(dim, 1);
        for (int a = dim - 2; a >= 0; --a) stride[a] = stride[a + 1] * nodes[a + 1];
        total = stride[0] * nodes[0];
    }

    std::vector<int> unflatten(int flat) const {
        std::vector<int> idx(dim);
        for (int a = 0; a < dim; ++a) {
            idx[a] = flat / stride[a];
            flat %= stride[a];
        }
        return idx;
    }

    std::vector<double> position(std::span<const int> idx) const {
        std::vector<double> x(dim);
        for (int a = 0; a < dim; ++a) x[a] = lo[a] + idx[a] * h;
        return x;
    }

    bool on_boundary(std::span<const int> idx) const {
        for (int a = 0; a < dim; ++a)
            if (idx[a] == 0 || idx[a] == nodes[a] - 1) return true;
        return false;
    }

    Side side(double x1) const {
        if (x1 < -0.5 * h) return Side::neg;
        if (x1 > 0.5 * h) return Side::pos;
        return Side::interface;
    }
};

struct Coefficients {
    const PdeProblem& p;
    const Grid& g;

    double side_conductivity(Side s) const {
        const double w = s == Side::neg ? p.value_neg : p.value_pos;
        return p.kind == CoefficientKind::omega_interface ? p.rate * w : w;
    }

    double capacity(std::span<const double> x) const {
        if (p.kind != CoefficientKind::omega_interface) return 1.0;
        switch (g.side(x[0])) {
            case Side::neg: return p.value_neg;
            case Side::pos: return p.value_pos;
            default: return 0.5 * (p.value_neg + p.value_pos);
        }
    }

    double face(std::span<const double> xp, std::span<const double> xq, int axis) const {
        if (p.kind == CoefficientKind::smooth) {
            const double a = p.conductivity(xp), b = p.conductivity(xq);
            if (!(a > 0.0) || !(b > 0.0)) throw ConstructionError("conductivity must be positive on the grid");
            return 2.0 * a * b / (a + b);
        }
        const Side sp = g.side(xp[0]), sq = g.side(xq[0]);
        if (axis == 0) {
            // a face normal to x_1 lies wholly on the side of its off-interface node
            return side_conductivity(sp == Side::interface ? sq : sp);
        }
        if (sp == Side::interface)
            return 0.5 * (side_conductivity(Side::neg) + side_conductivity(Side::pos));
        return side_conductivity(sp);
    }
};

using SpMat = Eigen::SparseMatrix<double>;

struct System {
    std::vector<int> unknown;   // grid node -> unknown index or -1
    std::vector<int> node_of;   // unknown index -> grid node
    SpMat K;
    Eigen::VectorXd boundary_load;
    Eigen::VectorXd capacity;
};

System assemble(const PdeProblem& p, const Grid& g) {
    Coefficients coef{p, g};
    System sys;
    sys.unknown.assign(g.total, -1);
    for (int n = 0; n < g.total; ++n) {
        if (!g.on_boundary(g.unflatten(n))) {
            sys.unknown[n] = static_cast<int>(sys.node_of.size());
            sys.node_of.push_back(n);
        }
    }
    const int m = static_cast<int>(sys.node_of.size());
    std::vector<Eigen::Triplet<double>> trip;
    sys.boundary_load = Eigen::VectorXd::Zero(m);
    sys.capacity.resize(m);
    const double inv_h2 = 1.0 / (g.h * g.h);
    for (int k = 0; k < m; ++k) {
        const int n = sys.node_of[k];
        auto idx = g.unflatten(n);
        auto xp = g.position(idx);
        sys.capacity[k] = coef.capacity(xp);
        double diag = 0.0;
        for (int a = 0; a < g.dim; ++a) {
            for (int dir : {-1, 1}) {
                auto qidx = idx;
                qidx[a] += dir;
                auto xq = g.position(qidx);
                const double c = coef.face(xp, xq, a) * inv_h2;
                diag += c;
                const int q = n + dir * g.stride[a];
                if (sys.unknown[q] >= 0) {
                    trip.emplace_back(k, sys.unknown[q], -c);
                } else {
                    sys.boundary_load[k] += c * p.boundary(xq);
                }
            }
        }
        trip.emplace_back(k, k, diag);
    }
    sys.K.resize(m, m);
    sys.K.setFromTriplets(trip.begin(), trip.end());
    sys.K.makeCompressed();
    return sys;
}

Eigen::VectorXd source_vector(const PdeProblem& p, const Grid& g, const System& sys, double t) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.node_of.size()));
    if (!p.source) return s;
    for (std::size_t k = 0; k < sys.node_of.size(); ++k) {
        auto x = g.position(g.unflatten(sys.node_of[k]));
        s[static_cast<Eigen::Index>(k)] = p.source(t, x);
    }
    return s;
}

PdeSolution make_solution(const Grid& g, const PdeProblem& p, const System& sys, const Eigen::VectorXd& interior) {
    PdeSolution sol;
    sol.dim = g.dim;
    sol.nodes = g.nodes;
    sol.lo = g.lo;
    sol.h = g.h;
    sol.u.resize(g.total);
    for (int n = 0; n < g.total; ++n) {
        const int k = sys.unknown[n];
        sol.u[n] = k >= 0 ? interior[k] : p.boundary(g.position(g.unflatten(n)));
    }
    return sol;
}

double relative_residual(const SpMat& A, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
    const double nb = b.norm();
    return (A * x - b).norm() / (nb > 0.0 ? nb : 1.0);
}

}  // namespace

PdeSolution solve_evolution(const PdeProblem& problem, double t) {
    if (t < 0.0) throw std::invalid_argument("solve_evolution: negative time");
    Grid g(problem);
    System sys = assemble(problem, g);
    const auto m = static_cast<Eigen::Index>(sys.node_of.size());

    Eigen::VectorXd u(m);
    for (Eigen::Index k = 0; k < m; ++k) u[k] = problem.initial(g.position(g.unflatten(sys.node_of[k])));
    if (t == 0.0) {
        PdeSolution sol = make_solution(g, problem, sys, u);
        sol.scheme = "initial data";
        return sol;
    }

    const double dt_target = problem.dt > 0.0 ? problem.dt : 0.25 * g.h;
    const int n_steps = std::max(1, static_cast<int>(std::ceil(t / dt_target - 1e-12)));
    const double dt = t / n_steps;
    // backward Euler half steps replace whole Crank-Nicolson steps at the start
    const int startup_cn = std::min(n_steps, (std::max(0, problem.startup_steps) + 1) / 2);

    SpMat C(m, m);
    C.reserve(Eigen::VectorXi::Constant(m, 1));
    for (Eigen::Index k = 0; k < m; ++k) C.insert(k, k) = sys.capacity[k];
    SpMat A = C + (0.5 * dt) * sys.K;  // shared by both step types
    SpMat B = C - (0.5 * dt) * sys.K;
    Eigen::SimplicialLDLT<SpMat> solver(A);
    if (solver.info() != Eigen::Success) throw SolverError("solve_evolution: factorization failed");

    double time = 0.0, residual = 0.0;
    auto check = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) {
        if (solver.info() != Eigen::Success || !x.allFinite())
            throw SolverError("solve_evolution: linear solve failed");
        residual = relative_residual(A, x, rhs);
    };
    for (int s = 0; s < n_steps; ++s) {
        if (s < startup_cn) {
            for (int half = 0; half < 2; ++half) {
                const double tn = time + 0.5 * dt;
                Eigen::VectorXd rhs =
                    C * u + (0.5 * dt) * (sys.boundary_load + source_vector(problem, g, sys, tn));
                Eigen::VectorXd next = solver.solve(rhs);
                check(next, rhs);
                u = std::move(next);
                time = tn;
            }
        } else {
            Eigen::VectorXd rhs = B * u + dt * sys.boundary_load +
                                  (0.5 * dt) * (source_vector(problem, g, sys, time) +
                                                source_vector(problem, g, sys, time + dt));
            Eigen::VectorXd next = solver.solve(rhs);
            check(next, rhs);
            u = std::move(next);
            time += dt;
        }
    }

    PdeSolution sol = make_solution(g, problem, sys, u);
    sol.time = t;
    sol.scheme = "finite volume, Crank-Nicolson with backward Euler start";
    sol.dt = dt;
    sol.steps = n_steps;
    sol.residual = residual;
    return sol;
}

PdeSolution solve_steady(const PdeProblem& problem) {
    Grid g(problem);
    System sys = assemble(problem, g);
    Eigen::VectorXd rhs = sys.boundary_load + source_vector(problem, g, sys, 0.0);
    Eigen::SimplicialLDLT<SpMat> solver(sys.K);
    if (solver.info() != Eigen::Success) throw SolverError("solve_steady: factorization failed");
    Eigen::VectorXd u = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !u.allFinite()) throw SolverError("solve_steady: linear solve failed");
    PdeSolution sol = make_solution(g, problem, sys, u);
    sol.time = std::numeric_limits<double>::infinity();
    sol.scheme = "finite volume, stationary";
    sol.residual = relative_residual(sys.K, u, rhs);
    return sol;
}

double PdeSolution::at(std::span<const int> index) const {
    int flat = 0;
    for (int a = 0; a < dim; ++a) flat = flat * nodes[a] + index[a];
    return u[flat];
}

std::vector<double> PdeSolution::node_position(std::span<const int> index) const {
    std::vector<double> x(dim);
    for (int a = 0; a < dim; ++a) x[a] = lo[a] + index[a] * h;
    return x;
}

double PdeSolution::value_at(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim) throw std::invalid_argument("value_at: dimension mismatch");
    std::vector<int> base(dim);
    std::vector<double> frac(dim);
    for (int a = 0; a < dim; ++a) {
        const double s = (x[a] - lo[a]) / h;
        if (s < -kGridTol || s > nodes[a] - 1 + kGridTol) throw std::out_of_range("value_at: point outside the box");
        base[a] = std::clamp(static_cast<int>(std::floor(s)), 0, nodes[a] - 2);
        frac[a] = std::clamp(s - base[a], 0.0, 1.0);
    }
    double value = 0.0;
    std::vector<int> corner(dim);
    for (int mask = 0; mask < (1 << dim); ++mask) {
        double w = 1.0;
        for (int a = 0; a < dim; ++a) {
            const bool up = (mask >> a) & 1;
            corner[a] = base[a] + up;
            w *= up ? frac[a] : 1.0 - frac[a];
        }
        if (w != 0.0) value += w * at(corner);
    }
    return value;
}

double interface_flux_mismatch(const PdeProblem& problem, const PdeSolution& sol) {
    if (problem.kind == CoefficientKind::smooth) return 0.0;
    const int i0 = static_cast<int>(std::lround(-sol.lo[0] / sol.h));
    if (i0 < 2 || i0 + 2 > sol.nodes[0] - 1) throw std::invalid_argument("interface too close to the box faces");
    const int rest = sol.dim > 1 ? static_cast<int>(sol.u.size()) / sol.nodes[0] : 1;
    double worst = 0.0;
    std::vector<int> idx(sol.dim);
    for (int r = 0; r < rest; ++r) {
        int tail = r;
        bool inside = true;
        for (int a = sol.dim - 1; a >= 1; --a) {
            idx[a] = tail % sol.nodes[a];
            tail /= sol.nodes[a];
            inside = inside && idx[a] > 0 && idx[a] < sol.nodes[a] - 1;
        }
        if (!inside) continue;
        auto u = [&](int i) {
            idx[0] = i;
            return sol.at(idx);
        };
        const double dplus = (-3.0 * u(i0) + 4.0 * u(i0 + 1) - u(i0 + 2)) / (2.0 * sol.h);
        const double dminus = (3.0 * u(i0) - 4.0 * u(i0 - 1) + u(i0 - 2)) / (2.0 * sol.h);
        worst = std::max(worst, std::abs(problem.value_pos * dplus - problem.value_neg * dminus));
    }
    return worst;
}

PdeProblem make_pde_problem(const ScenarioSpec& spec, const Box& box, const ScalarField& initial, double h) {
    PdeProblem p;
    p.box = box;
    p.h = h;
    p.initial = initial;
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            p.boundary = s.temperature;
            if constexpr (std::is_same_v<S, scenario::Constant>) {
                p.conductivity = ScalarField::constant(s.rate);
            } else if constexpr (std::is_same_v<S, scenario::SmoothRate>) {
                p.conductivity = s.rate_field;
            } else if constexpr (std::is_same_v<S, scenario::MacroscopicRate>) {
                p.conductivity = s.rho;
            } else if constexpr (std::is_same_v<S, scenario::HalfspaceOmega>) {
                p.kind = CoefficientKind::omega_interface;
                p.value_neg = s.omega_neg;
                p.value_pos = s.omega_pos;
                p.rate = s.rate;
            } else if constexpr (std::is_same_v<S, scenario::HalfspaceRate>) {
                p.kind = CoefficientKind::rate_interface;
                p.value_neg = s.rate_neg;
                p.value_pos = s.rate_pos;
            } else {
                throw ConstructionError("random_omega has no reference PDE");
            }
        },
        spec);
    return p;
}

void write_solution_csv(std::ostream& os, const PdeSolution& sol) {
    CsvWriter w(os);
    std::vector<std::string> cols;
    for (int a = 0; a < sol.dim; ++a) cols.push_back("x" + std::to_string(a + 1));
    cols.push_back("u");
    w.header(cols);
    std::vector<int> idx(sol.dim);
    for (std::size_t n = 0; n < sol.u.size(); ++n) {
        int flat = static_cast<int>(n);
        for (int a = sol.dim - 1; a >= 0; --a) {
            idx[a] = flat % sol.nodes[a];
            flat /= sol.nodes[a];
        }
        auto x = sol.node_position(idx);
        for (int a = 0; a < sol.dim; ++a) os << CsvWriter::format(x[a]) << ',';
        os << CsvWriter::format(sol.u[n]) << '\n';
    }
}

}  // namespace kmp

#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kmp/absorption.hpp"
#include "kmp/environment.hpp"

namespace kmp {

/// Which conservation law the reference solver discretizes, always in the form
/// c(x) u_t = div(k(x) grad u) + s(t,x) with Dirichlet data on the box faces.
enum class CoefficientKind {
    smooth,          // c = 1, k = R(x)
    omega_interface, // c = omega_{sign x_1}, k = r omega_{sign x_1}; flux weighted by omega
    rate_interface,  // c = 1, k = r_{sign x_1}; flux weighted by r
};

struct PdeProblem {
    Box box;
    double h = 1.0 / 32;  // grid step; the grid has a node line on x_1 = 0 when 0 lies in the box
    CoefficientKind kind = CoefficientKind::smooth;
    ScalarField conductivity = ScalarField::constant(1.0);  // R for `smooth`
    double value_neg = 1.0;  // omega_{-1} or r_{-1}
    double value_pos = 1.0;  // omega_1 or r_1
    double rate = 1.0;       // constant r for omega_interface
    /// Any callable on points; ScalarField converts implicitly.
    std::function<double(std::span<const double>)> initial = ScalarField::constant(0.0);
    std::function<double(std::span<const double>)> boundary = ScalarField::constant(0.0);
    /// Optional source s(t, x); solve_steady evaluates it at t = 0.
    std::function<double(double, std::span<const double>)> source;
    /// Time step; zero picks h / 4.
    double dt = 0.0;
    /// Backward Euler start steps (at dt / 2) damping nonsmooth data.
    int startup_steps = 4;
};

/// Nodal values on the uniform grid, boundary nodes included, x_1 slowest.
struct PdeSolution {
    int dim = 0;
    std::vector<int> nodes;  // per axis
    std::vector<double> lo;
    double h = 0.0;
    double time = 0.0;
    std::vector<double> u;
    std::string scheme;
    double dt = 0.0;
    int steps = 0;
    double residual = 0.0;  // relative residual of the last linear solve

    /// Multilinear interpolation at a point of the closed box.
    double value_at(std::span<const double> x) const;
    double at(std::span<const int> index) const;
    std::vector<double> node_position(std::span<const int> index) const;
};

PdeSolution solve_evolution(const PdeProblem& problem, double t);
PdeSolution solve_steady(const PdeProblem& problem);

/// Largest |w_+ d/dx_1+ u - w_- d/dx_1- u| over interface nodes, with second
/// order one-sided differences. Weights are (omega_-, omega_+) or (r_-, r_+);
/// zero when the problem has no interface.
double interface_flux_mismatch(const PdeProblem& problem, const PdeSolution& sol);

/// Reference problem for a scenario: rates or degrees of freedom become the
/// coefficients, f the initial profile and the scenario temperature the
/// boundary data. One-dimensional random-omega scenarios have no reference PDE.
PdeProblem make_pde_problem(const ScenarioSpec& spec, const Box& box, const ScalarField& initial, double h);

/// Columns x1..xd, u for every node.
void write_solution_csv(std::ostream& os, const PdeSolution& sol);

}  // namespace kmp

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "kmp/sampling.hpp"

namespace kmp {

/// Raised when a domain, scenario or environment cannot be built as requested.
class ConstructionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned open box in macroscopic coordinates.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    int dim() const { return static_cast<int>(lo.size()); }
    static Box unit_interval() { return Box{{0.0}, {1.0}}; }
    static Box symmetric(int d) { return Box{std::vector<double>(d, -1.0), std::vector<double>(d, 1.0)}; }
};

struct Edge {
    int u;          // interior site index
    int v;          // interior site index, or boundary site index when `to_bath`
    bool to_bath;
};

/// The lattice sites of L*box, the boundary layer around them and every
/// nearest-neighbour edge with at least one interior endpoint.
class LatticeDomain {
  public:
    LatticeDomain(int L, Box box);

    int dim() const { return dim_; }
    int scale() const { return L_; }
    const Box& box() const { return box_; }

    int interior_count() const { return static_cast<int>(interior_.size()) / dim_; }
    int boundary_count() const { return static_cast<int>(boundary_.size()) / dim_; }
    std::span<const int> interior_site(int i) const {
        return {interior_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<const int> boundary_site(int b) const {
        return {boundary_.data() + static_cast<std::size_t>(b) * dim_, static_cast<std::size_t>(dim_)};
    }
    /// Macroscopic position v/L.
    std::vector<double> interior_position(int i) const;
    std::vector<double> boundary_position(int b) const;

    /// -1 when the coordinate is not an interior (resp. boundary) site.
    int interior_index(std::span<const int> coord) const;
    int boundary_index(std::span<const int> coord) const;
    /// Interior site closest to the macroscopic point x (rounding each coordinate).
    int nearest_interior(std::span<const double> x) const;

    const std::vector<Edge>& edges() const { return edges_; }
    int interior_edge_count() const { return interior_edge_count_; }
    /// Edge ids touching interior site i.
    std::span<const int> incident_edges(int i) const {
        return {incident_.data() + incident_offset_[i],
                static_cast<std::size_t>(incident_offset_[i + 1] - incident_offset_[i])};
    }

  private:
    int cell_code(std::span<const int> coord) const;

    int dim_;
    int L_;
    Box box_;
    std::vector<int> lo_;      // lowest coordinate of the padded grid per axis
    std::vector<int> extent_;  // padded grid extent per axis
    std::vector<int> code_;    // >=0 interior, <= -2 boundary (-(b+2)), -1 outside
    std::vector<int> interior_;
    std::vector<int> boundary_;
    std::vector<Edge> edges_;
    int interior_edge_count_ = 0;
    std::vector<int> incident_offset_;
    std::vector<int> incident_;
};

LatticeDomain build_box_domain(int L, const Box& box);

/// Microscopic time matching macroscopic time t at scale L. An edge of rate r
/// moves a lone particle (or half the pooled energy) across it at rate r/2,
/// so the heat equation with coefficient r is reached at 2 t L^2.
inline double diffusive_time(double t, int L) { return 2.0 * t * static_cast<double>(L) * L; }

/// Named scalar function on R^d, used for rates, temperatures and profiles.
struct ScalarField {
    enum class Kind { constant, affine, exponential, affine_bump };

    Kind kind = Kind::constant;
    double c0 = 0.0;
    std::vector<double> grad;  // missing trailing components are zero
    double amplitude = 0.0;    // affine_bump only
    Box bump_box;              // affine_bump only: the bump vanishes on its faces

    static ScalarField constant(double c);
    static ScalarField affine(double c0, std::vector<double> grad);
    static ScalarField exponential(double c0, std::vector<double> grad);
    /// c0 + grad.x + amplitude * prod_i sin(pi (x_i - lo_i) / (hi_i - lo_i)).
    static ScalarField affine_bump(double c0, std::vector<double> grad, double amplitude, Box box);

    double operator()(std::span<const double> x) const;
    double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }
};

/// Continuous map [0,1] -> probability simplex over degrees of freedom {1..K},
/// linear between two endpoint distributions.
struct SimplexField {
    std::vector<double> at0;
    std::vector<double> at1;

    SimplexField(std::vector<double> p0, std::vector<double> p1);
    int size() const { return static_cast<int>(at0.size()); }
    /// kappa_i(y) for i = 1..K (returned index i-1).
    double operator()(int i, double y) const { return (1.0 - y) * at0[i - 1] + y * at1[i - 1]; }
};

namespace scenario {
struct Constant {
    int omega;
    double rate;
    ScalarField temperature;
};
struct SmoothRate {
    ScalarField rate_field;
    int omega;
    ScalarField temperature;
};
struct HalfspaceOmega {
    int omega_neg;
    int omega_pos;
    double rate;
    ScalarField temperature;
};
struct HalfspaceRate {
    double rate_neg;
    double rate_pos;
    int omega;
    ScalarField temperature;
};
struct RandomOmega {
    SimplexField kappa;
    double rate;
    ScalarField temperature;
};
struct MacroscopicRate {
    ScalarField rho;
    int omega;
    ScalarField temperature;
};
}  // namespace scenario

using ScenarioSpec = std::variant<scenario::Constant, scenario::SmoothRate, scenario::HalfspaceOmega,
                                  scenario::HalfspaceRate, scenario::RandomOmega,
                                  scenario::MacroscopicRate>;

const char* scenario_name(const ScenarioSpec& spec);

/// Degrees of freedom, edge rates and bath temperatures on a domain.
class Environment {
  public:
    Environment(LatticeDomain domain, std::vector<int> omega, std::vector<double> rate,
                std::vector<double> bath_temp);

    const LatticeDomain& domain() const { return domain_; }
    int omega(int site) const { return omega_[site]; }
    double rate(int edge) const { return rate_[edge]; }
    double bath_temp(int boundary_site) const { return bath_temp_[boundary_site]; }
    const std::vector<int>& omegas() const { return omega_; }
    const std::vector<double>& rates() const { return rate_; }
    const std::vector<double>& bath_temps() const { return bath_temp_; }
    double rate_min() const { return rate_min_; }
    double rate_max() const { return rate_max_; }
    double total_rate() const { return total_rate_; }

  private:
    LatticeDomain domain_;
    std::vector<int> omega_;
    std::vector<double> rate_;
    std::vector<double> bath_temp_;
    double rate_min_ = 0.0;
    double rate_max_ = 0.0;
    double total_rate_ = 0.0;
};

Environment build_scenario(const ScenarioSpec& spec, const LatticeDomain& domain, RngStream& rng);

/// One-dimensional chain on (0,1): sites 0..L, interior 1..L-1, baths at 0 and L.
/// Uses the conventions omega_0 := omega_1 and omega_L := omega_{L-1}.
class ChainView {
  public:
    explicit ChainView(const Environment& env);

    int L() const { return L_; }
    /// omega_m for m = 0..L.
    int omega(int m) const { return omega_[m]; }
    /// r_{m-1/2}, the rate of the edge joining m-1 and m, for m = 1..L.
    double rate_below(int m) const { return rate_[m]; }
    double T0() const { return T0_; }
    double T1() const { return T1_; }
    /// Interior site index of chain position m (1..L-1).
    int site(int m) const { return site_[m]; }
    /// Edge id of the edge joining m-1 and m, m = 1..L.
    int edge_below(int m) const { return edge_[m]; }
    /// Chain position of interior site index i.
    int position(int i) const { return position_[i]; }

  private:
    int L_;
    std::vector<int> omega_;
    std::vector<double> rate_;
    std::vector<int> site_;
    std::vector<int> edge_;
    std::vector<int> position_;
    double T0_;
    double T1_;
};

/// Chain on (0,1) with omega drawn uniformly from `omega_choices` and rates
/// uniform on [rate_lo, rate_hi], independently per site and edge.
Environment make_iid_chain(int L, std::span<const int> omega_choices, double rate_lo,
                           double rate_hi, double T0, double T1, RngStream& rng);

/// Chain on (0,1) from explicit fields: omega for sites 1..L-1 and r_{m-1/2} for m = 1..L.
Environment make_chain(std::span<const int> omega, std::span<const double> rate_below, double T0,
                       double T1);

struct ScenarioCatalogEntry {
    std::string kind;
    std::string regime;
    std::string parameters;
};

std::vector<ScenarioCatalogEntry> scenario_catalog();

}  // namespace kmp

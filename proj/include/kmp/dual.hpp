#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "kmp/environment.hpp"
#include "kmp/estimate.hpp"
#include "kmp/forward.hpp"
#include "kmp/sampling.hpp"

namespace kmp {

/// Where a labeled dual particle sits: an interior site, or absorbed into the
/// storage of a boundary site (absorbed particles never move again).
class Location {
  public:
    static Location active(int site) { return Location(site); }
    static Location absorbed(int boundary_site) { return Location(-boundary_site - 1); }

    bool is_active() const { return code_ >= 0; }
    int site() const { return code_; }
    int bath() const { return -code_ - 1; }
    int code() const { return code_; }

    friend bool operator==(Location a, Location b) = default;

  private:
    explicit Location(int code) : code_(code) {}
    int code_;
};

struct DualState {
    std::vector<Location> particles;  // particle id -> location
    double time = 0.0;
};

struct OccupancyView {
    std::vector<int> n;      // interior site -> active count
    std::vector<int> n_hat;  // boundary site -> absorbed count
};

OccupancyView occupancy(const DualState& state, const LatticeDomain& domain);

/// All particles on the edge endpoints are pooled and split beta-binomially
/// with parameters (omega_u/2, omega_v/2).
DualState dual_step_interior(DualState state, int edge_id, const Environment& env, RngStream& rng);

/// Every active particle at the interior endpoint is absorbed at the bath site.
DualState dual_step_boundary(DualState state, int edge_id, const Environment& env);

/// Pass as t_end to run until every particle is absorbed.
inline constexpr double kUntilAbsorbed = std::numeric_limits<double>::infinity();

struct DualRun {
    DualState state;
    std::uint64_t events = 0;  // rings of edges touching an occupied site
};

/// Gillespie dynamics restricted to edges touching occupied sites; rings of
/// other edges are identities and are skipped.
DualRun simulate_dual(const Environment& env, DualState init, double t_end, RngStream& rng);

/// Duality function, evaluated in log space with 0^0 = 1.
double duality_F(const OccupancyView& occ, std::span<const double> xi, const Environment& env);

/// Exact law of one edge ring: every labeled outcome with its probability.
struct RingOutcome {
    std::vector<Location> particles;
    double prob;
};
std::vector<RingOutcome> ring_outcomes(const Environment& env, std::span<const Location> particles,
                                       int edge_id);

/// Exact law of a single dual particle at time t (uniformization).
struct SingleParticleLaw {
    std::vector<double> active;    // interior site -> probability
    std::vector<double> absorbed;  // boundary site -> probability
};
SingleParticleLaw single_particle_transient(const Environment& env, int start_site, double t);

/// Exact E F(Y(t), xi0) for a single particle started at `start_site`.
double single_particle_dual_expectation(const Environment& env, int start_site, double t,
                                        std::span<const double> xi0);

struct DualityEstimate {
    MeanWithError lhs;  // E F(n0, X(t)) | X(0) = xi0
    MeanWithError rhs;  // E F(Y(t), xi0) | Y(0) = n0
    double combined_stderr() const;
    double z_score() const;
};

struct ReplicaPlan {
    std::uint64_t seed = 1;
    std::size_t replicas = 1000;
    unsigned workers = 1;
};

DualityEstimate verify_duality_mc(const Environment& env, const EnergyState& xi0, const DualState& n0, double t,
                                  const ReplicaPlan& plan);

/// Offset s and its moment order n*_s around the site nearest to x.
struct MomentTerm {
    std::vector<int> offset;
    int order;
};

/// Estimate of E prod_s xi_{<xL>+s}(t_micro)^{n*_s} when X(0) is the product
/// of Gamma(omega_v/2, f(v/L)). The dual runs to t_micro; active particles
/// contribute f at their site and absorbed ones the bath temperature.
MeanWithError estimate_moment_via_dual(const Environment& env, std::span<const double> x,
                                       std::span<const MomentTerm> terms, double t_micro, const ScalarField& f,
                                       const ReplicaPlan& plan);

}  // namespace kmp

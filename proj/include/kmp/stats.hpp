#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kmp/dual.hpp"
#include "kmp/environment.hpp"
#include "kmp/estimate.hpp"
#include "kmp/pde.hpp"

namespace kmp {

/// Kolmogorov-Smirnov 1% critical value for n samples (asymptotic law).
double ks_critical_1pct(std::size_t n);
/// Two-sample version for sizes n and m.
double ks_critical_1pct(std::size_t n, std::size_t m);

/// sup |F_n - F| against Gamma(shape, scale).
double ks_distance_gamma(std::span<const double> samples, double shape, double scale);
/// sup |F_n - G_m| between two samples.
double ks_distance_two_sample(std::span<const double> a, std::span<const double> b);

struct MomentLine {
    int order = 0;
    MeanWithError empirical;
    double reference = 0.0;
    double rel_error = 0.0;
    double z = 0.0;  // |empirical - reference| / std_error
};

struct MomentReport {
    std::vector<MomentLine> lines;
    std::size_t samples = 0;
    double ks_distance = 0.0;
    double ks_critical = 0.0;

    bool moments_within(double sigmas) const;
    bool ks_pass() const { return ks_distance <= ks_critical; }
};

/// Moments k = 1..max_order of independent samples against the Gamma(omega/2,
/// scale_ref) moments, and the KS distance to that law.
MomentReport gamma_marginal_test(std::span<const double> samples, int omega, double scale_ref,
                                 int max_order = 4);

/// Moment report when each replica contributes one estimate per order
/// (per_replica[r][k-1]); standard errors come from the spread across replicas.
MomentReport replica_moment_report(const std::vector<std::vector<double>>& per_replica, int omega,
                                   double scale_ref);

struct CovarianceLine {
    int i = 0;
    int j = 0;
    MeanWithError covariance;
    double normalized = 0.0;  // covariance / (sd_i sd_j)
    double z = 0.0;
};

struct FactorizationReport {
    std::vector<CovarianceLine> pairs;
    double max_abs_normalized = 0.0;
    double max_z = 0.0;

    bool factorizes(double sigmas) const { return max_z <= sigmas; }
};

/// Cross-covariances of jointly observed energies, rows are independent
/// observations and columns the components.
FactorizationReport joint_factorization_test(const std::vector<std::vector<double>>& rows);

struct InvariancePlan {
    std::vector<double> checkpoints;  // micro times
    int max_order = 3;
    ReplicaPlan replicas;
};

struct InvarianceLine {
    double time = 0.0;
    int site = 0;
    int order = 0;
    MeanWithError empirical;
    double reference = 0.0;
    double z = 0.0;
};

struct InvarianceReport {
    std::vector<InvarianceLine> lines;
    double max_z = 0.0;
    int exceedances(double sigmas) const;
};

/// Starts from the product of Gamma(omega_v/2, T), which must be invariant when
/// every bath has temperature T, and compares per-site moments with their
/// initial values at each checkpoint.
InvarianceReport equilibrium_invariance_test(const Environment& env, const InvariancePlan& plan);

/// One ring of a closed pair of sites: (p S, (1-p) S) with S = xi_1 + xi_2,
/// p ~ Beta(omega_1/2, omega_2/2), against fresh product Gamma draws, compared
/// by two-sample KS on both coordinates.
struct PairSplitReport {
    double ks_first = 0.0;
    double ks_second = 0.0;
    double ks_critical = 0.0;
    bool pass() const { return ks_first <= ks_critical && ks_second <= ks_critical; }
};
PairSplitReport pair_split_invariance_test(int omega1, int omega2, double T, std::size_t n, std::uint64_t seed);

struct HydroLine {
    std::vector<double> x;
    int site = 0;
    MeanWithError mc;  // E xi * 2 / omega at the nearest site
    double pde = 0.0;
    double rel_error = 0.0;
};

/// Forward Monte Carlo of the rescaled energy at the sites nearest to each x
/// at macroscopic time t (micro time diffusive_time(t, L)), from the product
/// Gamma state with profile f, against the reference solution.
std::vector<HydroLine> hydro_comparison(const Environment& env, const ScalarField& f,
                                        const std::vector<std::vector<double>>& points, double t,
                                        const PdeSolution& reference, const ReplicaPlan& plan);

/// Steady-state sampling: burn-in of burn_in_factor L^2 micro time, then
/// time averages over window_factor L^2 with unit spacing; KS snapshots every
/// snapshot_spacing_factor L^2 inside the window.
struct SteadyStatePlan {
    double burn_in_factor = 10.0;
    double window_factor = 40.0;
    double snapshot_spacing_factor = 1.0;
    double average_spacing = 1.0;
    std::vector<int> probe_sites;
    ReplicaPlan replicas;
};

struct SteadyStateReplica {
    std::vector<double> mean;          // time average of xi per site
    std::vector<double> power2;        // time average of xi^2
    std::vector<double> power3;
    std::vector<double> power4;
    std::vector<double> adjacent;      // time average of xi_i xi_{i+1} along the site order
    std::vector<std::vector<double>> probe_snapshots;  // probe -> snapshot values
};

std::vector<SteadyStateReplica> sample_steady_state(const Environment& env, const ScalarField& initial,
                                                    const SteadyStatePlan& plan);

/// Mean over bulk neighbour pairs (sites i, i+1 with both in [lo, hi)) of the
/// normalized covariance, each replica's time averages pooled by replica.
MeanWithError adjacent_normalized_covariance(const std::vector<SteadyStateReplica>& runs, int lo, int hi);

/// Bootstrap standard error of the mean with b resamples.
double bootstrap_stderr(std::span<const double> values, int b, std::uint64_t seed);

}  // namespace kmp

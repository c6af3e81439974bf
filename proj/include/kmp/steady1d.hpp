#pragma once

#include <iosfwd>
#include <vector>

#include "kmp/environment.hpp"

namespace kmp {

/// psi(m) = (omega_{m-1} + omega_m) / (r_{m-1/2} omega_{m-1} omega_m), m = 1..L,
/// returned with element m-1 holding psi(m). Throws std::domain_error unless
/// the environment is a chain on (0,1).
std::vector<double> compute_psi(const Environment& env);

/// Closed-form steady-state quantities of a chain.
class Profile1D {
  public:
    explicit Profile1D(const Environment& env);

    int L() const { return L_; }
    double psi(int m) const { return psi_[m]; }              // m = 1..L
    double phi_under(int m) const { return phi_[m]; }        // sum_{i<=m} psi(i), m = 0..L
    double phi_over(int m) const { return phi_[L_] - phi_[m]; }
    double A_at(int m) const { return phi_[m] / phi_[L_]; }  // A^(L)(m/L)
    double A(double x) const;
    double u_at(int m) const { return (1.0 - A_at(m)) * T0_ + A_at(m) * T1_; }
    double u(double x) const;
    double T0() const { return T0_; }
    double T1() const { return T1_; }

  private:
    int L_;
    std::vector<double> psi_;  // index 0 unused
    std::vector<double> phi_;
    double T0_;
    double T1_;
};

/// floor(x L), tolerant of x*L landing a rounding error below an integer.
int lattice_floor(double x, int L);

double profile_A(const Environment& env, double x);
double steady_temperature(const Environment& env, double x);

/// Limit of A^(L)(x) for independently drawn omega with law kappa(v/L).
double limit_A_random_omega(const SimplexField& kappa, double x);
/// Limit of A^(L)(x) for r_{v+1/2} = rho(v/L) and constant omega.
double limit_A_rho(const ScalarField& rho, double x);

enum class PairConfig { same_site, adjacent };

struct Drift {
    double dS = 0.0;
    double dT = 0.0;
};

struct DriftReport {
    Drift printed;  // closed forms as published
    Drift exact;    // exact one-step expectation from the dual generator
};

/// One-step drifts of S = Phi(a)Phi(b) + PhiBar(a)PhiBar(b) and
/// T = Phi(max) - Phi(min) for two dual particles at (i,i) or (i,i+1). A step
/// is a ring of any edge touching an occupied site, chosen proportional to
/// its rate. Needs 2 <= i and the second particle at most L-2.
Drift drift_S_T_printed(const Environment& env, PairConfig config, int i);
Drift drift_S_T_exact(const Environment& env, PairConfig config, int i);
DriftReport drift_S_T(const Environment& env, PairConfig config, int i);

/// Columns m, psi, phi_under, A, u for m = 1..L.
void write_profile_csv(std::ostream& os, const Profile1D& profile);

}  // namespace kmp

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kmp/environment.hpp"

namespace kmp {

class SolverError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Nearest-neighbour walk on A..B with conductances 1/R_i across (i, i+1).
struct ResistorChain {
    std::vector<double> resistance;  // R_A .. R_{B-1}
    int A = 0;
    int B = 0;
    int start = 0;
};

/// P(hit A before B) = sum_{i>=start} R_i / sum_i R_i.
double hitting_prob_network(const ResistorChain& chain);

/// Rates at which a chain boundary edge absorbs a lone dual particle.
/// `literal` uses the full edge rate; `martingale` uses half of it, the value
/// for which Phi is an exact martingale up to the boundary.
enum class BoundaryConvention { literal, martingale };

struct JumpRates {
    double left = 0.0;
    double right = 0.0;
};

/// Rates of a lone dual particle at chain position m (1..L-1).
JumpRates one_particle_jump_rates(const Environment& env, int m,
                                  BoundaryConvention conv = BoundaryConvention::literal);

struct OneParticleAbsorption {
    double P0 = 0.0;
    double PL = 0.0;
};

OneParticleAbsorption absorb_prob_one_particle(const Environment& env, int start,
                                               BoundaryConvention conv = BoundaryConvention::literal);

/// P(absorbed at L) for every start 0..L, from one tridiagonal solve.
std::vector<double> absorb_prob_right_all(const Environment& env,
                                          BoundaryConvention conv = BoundaryConvention::literal);

/// Embedded jump chain of two labeled dual particles on a chain, states
/// (a, b) with a, b in 0..L and absorption at 0 and L. Rows come from the
/// exact ring law of the dual; rings that leave the state unchanged are
/// dropped and the row renormalized.
class PairChain {
  public:
    explicit PairChain(const Environment& env);

    int L() const { return L_; }
    int state_count() const { return (L_ + 1) * (L_ + 1); }
    int index(int a, int b) const { return a * (L_ + 1) + b; }
    std::pair<int, int> state(int idx) const { return {idx / (L_ + 1), idx % (L_ + 1)}; }
    bool absorbed(int a, int b) const { return (a == 0 || a == L_) && (b == 0 || b == L_); }

    /// Transition row (target index, probability) of a non-absorbed state.
    const std::vector<std::pair<int, double>>& row(int a, int b) const { return rows_[index(a, b)]; }

  private:
    int L_;
    std::vector<std::vector<std::pair<int, double>>> rows_;
};

struct PairAbsorption {
    double p00 = 0.0;  // both absorbed at 0
    double p0L = 0.0;  // first at 0, second at L
    double pL0 = 0.0;
    double pLL = 0.0;
    double residual = 0.0;  // max relative residual over the four solves
};

struct PairSolverOptions {
    int direct_max_L = 150;
    double tolerance = 1e-10;
};

/// Absorption law of a labeled pair started at chain positions (a, b).
PairAbsorption absorb_probs_two_particles(const Environment& env, int a, int b,
                                          const PairSolverOptions& opts = {});

/// Same law for every start state, indexed by PairChain::index.
std::vector<PairAbsorption> absorb_probs_two_particles_all(const Environment& env,
                                                           const PairSolverOptions& opts = {});

/// Columns start, P0, PL for starts 1..L-1.
void write_one_particle_csv(std::ostream& os, const Environment& env,
                            BoundaryConvention conv = BoundaryConvention::literal);

}  // namespace kmp

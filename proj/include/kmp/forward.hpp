#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "kmp/environment.hpp"
#include "kmp/sampling.hpp"

namespace kmp {

struct EnergyState {
    std::vector<double> xi;  // indexed by interior site
    double time = 0.0;
};

/// Pool the energies across an interior edge and give the fraction p to u.
EnergyState step_interior(EnergyState state, const Edge& edge, double p);

/// Replace the energy of the interior endpoint by the bath draw eta.
EnergyState step_boundary(EnergyState state, const Edge& edge, double eta);

/// Walker alias table over a fixed set of nonnegative weights.
class AliasTable {
  public:
    explicit AliasTable(std::span<const double> weights);

    std::size_t sample(RngStream& rng) const noexcept {
        double u = rng.uniform() * static_cast<double>(prob_.size());
        auto i = static_cast<std::size_t>(u);
        if (i >= prob_.size()) i = prob_.size() - 1;
        return (u - static_cast<double>(i)) < prob_[i] ? i : alias_[i];
    }
    std::size_t size() const { return prob_.size(); }

  private:
    std::vector<double> prob_;
    std::vector<std::size_t> alias_;
};

/// Callback fired at fixed epochs with the state holding at that time
/// (the state after the last event not later than the epoch).
struct Observer {
    std::vector<double> epochs;
    std::function<void(std::size_t, const EnergyState&)> on_epoch;
};

struct ForwardRun {
    EnergyState state;
    std::uint64_t events = 0;
};

/// Exact continuous-time simulation of the energy process on a fixed
/// environment. Samplers and the edge alias table are built once.
class ForwardSimulator {
  public:
    explicit ForwardSimulator(const Environment& env);

    ForwardRun run(EnergyState init, double t_end, RngStream& rng, const Observer* observer = nullptr) const;

    const Environment& environment() const { return env_; }

  private:
    struct EdgeOp {
        int u;
        int v;
        int sampler;
        bool bath;
        double temp;
    };

    const Environment& env_;
    AliasTable picker_;
    std::vector<EdgeOp> ops_;
    std::vector<BetaSampler> beta_;
    std::vector<GammaSampler> gamma_;
};

ForwardRun simulate(const Environment& env, EnergyState init, double t_end, RngStream& rng,
                    const Observer* observer = nullptr);

/// Independent xi_v ~ Gamma(omega_v/2, f(v/L)); f(v/L) = 0 gives xi_v = 0.
EnergyState init_product_gamma(const Environment& env, const ScalarField& f, RngStream& rng);

}  // namespace kmp

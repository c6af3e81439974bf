#include "kmp/forward.hpp"

#include <map>
#include <stdexcept>
#include <utility>

#include <boost/random/poisson_distribution.hpp>

namespace kmp {

EnergyState step_interior(EnergyState state, const Edge& edge, double p) {
    double pooled = state.xi[edge.u] + state.xi[edge.v];
    state.xi[edge.u] = p * pooled;
    state.xi[edge.v] = pooled - state.xi[edge.u];
    return state;
}

EnergyState step_boundary(EnergyState state, const Edge& edge, double eta) {
    state.xi[edge.u] = eta;
    return state;
}

AliasTable::AliasTable(std::span<const double> weights) : prob_(weights.size()), alias_(weights.size()) {
    if (weights.empty()) return;
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("AliasTable: negative weight");
        total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("AliasTable: weights sum to zero");
    const auto n = weights.size();
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
        scaled[i] = weights[i] * static_cast<double>(n) / total;
        (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
        std::size_t s = small.back();
        small.pop_back();
        std::size_t l = large.back();
        prob_[s] = scaled[s];
        alias_[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    for (std::size_t i : large) {
        prob_[i] = 1.0;
        alias_[i] = i;
    }
    for (std::size_t i : small) {
        prob_[i] = 1.0;
        alias_[i] = i;
    }
}

ForwardSimulator::ForwardSimulator(const Environment& env) : env_(env), picker_(env.rates()) {
    const auto& edges = env.domain().edges();
    std::map<std::pair<int, int>, int> beta_slots;
    std::map<int, int> gamma_slots;
    ops_.reserve(edges.size());
    for (int id = 0; id < static_cast<int>(edges.size()); ++id) {
        const auto& e = edges[id];
        EdgeOp op{e.u, e.v, 0, e.to_bath, 0.0};
        int wu = env.omega(e.u);
        if (e.to_bath) {
            op.temp = env.bath_temp(e.v);
            auto [it, inserted] = gamma_slots.try_emplace(wu, static_cast<int>(gamma_.size()));
            if (inserted) gamma_.emplace_back(0.5 * wu);
            op.sampler = it->second;
        } else {
            int wv = env.omega(e.v);
            auto [it, inserted] = beta_slots.try_emplace({wu, wv}, static_cast<int>(beta_.size()));
            if (inserted) beta_.emplace_back(BetaParams(0.5 * wu, 0.5 * wv));
            op.sampler = it->second;
        }
        ops_.push_back(op);
    }
}

ForwardRun ForwardSimulator::run(EnergyState init, double t_end, RngStream& rng,
                                 const Observer* observer) const {
    if (t_end < init.time) throw std::invalid_argument("simulate: t_end precedes the initial time");
    ForwardRun out{std::move(init), 0};
    auto& xi = out.state.xi;
    double t = out.state.time;
    const double total = env_.total_rate();

    std::size_t next_epoch = 0;
    const std::size_t n_epochs = observer ? observer->epochs.size() : 0;
    auto flush_epochs = [&](double until) {
        while (next_epoch < n_epochs && observer->epochs[next_epoch] < until) {
            EnergyState snap{xi, observer->epochs[next_epoch]};
            observer->on_epoch(next_epoch, snap);
            ++next_epoch;
        }
    };

    auto apply = [&](const EdgeOp& op) {
        if (op.bath) {
            xi[op.u] = op.temp > 0.0 ? op.temp * gamma_[op.sampler](rng) : 0.0;
        } else {
            double pooled = xi[op.u] + xi[op.v];
            double p = beta_[op.sampler](rng);
            xi[op.u] = p * pooled;
            xi[op.v] = pooled - xi[op.u];
        }
    };

    if (total > 0.0 && n_epochs == 0) {
        // Without observers only the jump chain matters: the number of rings
        // in the window is Poisson and each ring picks its edge by rate.
        boost::random::poisson_distribution<std::uint64_t, double> count((t_end - t) * total);
        const std::uint64_t n = t_end > t ? count(rng) : 0;
        for (std::uint64_t k = 0; k < n; ++k) apply(ops_[picker_.sample(rng)]);
        out.events = n;
    } else if (total > 0.0) {
        for (;;) {
            double next = t + rng.exponential() / total;
            if (next > t_end) break;
            flush_epochs(next);
            t = next;
            apply(ops_[picker_.sample(rng)]);
            ++out.events;
        }
    }
    // Epochs up to and including t_end see the final state.
    while (next_epoch < n_epochs && observer->epochs[next_epoch] <= t_end) {
        EnergyState snap{xi, observer->epochs[next_epoch]};
        observer->on_epoch(next_epoch, snap);
        ++next_epoch;
    }
    out.state.time = t_end;
    return out;
}

ForwardRun simulate(const Environment& env, EnergyState init, double t_end, RngStream& rng,
                    const Observer* observer) {
    return ForwardSimulator(env).run(std::move(init), t_end, rng, observer);
}

EnergyState init_product_gamma(const Environment& env, const ScalarField& f, RngStream& rng) {
    const auto& dom = env.domain();
    EnergyState s;
    s.xi.resize(dom.interior_count());
    for (int i = 0; i < dom.interior_count(); ++i) {
        double scale = f(dom.interior_position(i));
        if (scale < 0.0) throw std::invalid_argument("init_product_gamma: profile must be nonnegative");
        s.xi[i] = scale > 0.0 ? scale * GammaSampler(0.5 * env.omega(i))(rng) : 0.0;
    }
    return s;
}

}  // namespace kmp

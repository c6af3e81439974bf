#include "kmp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "kmp/forward.hpp"
#include "kmp/replicas.hpp"
#include "kmp/sampling.hpp"

namespace kmp {

namespace {

// c(0.01) in the asymptotic Kolmogorov law, P(K > c) = 0.01.
constexpr double kKolmogorov1pct = 1.62762;

MomentLine moment_line(int k, MeanWithError est, double reference) {
    MomentLine line;
    line.order = k;
    line.empirical = est;
    line.reference = reference;
    line.rel_error = reference != 0.0 ? std::abs(est.mean - reference) / std::abs(reference) : std::abs(est.mean);
    line.z = z_score(est.mean, reference, est.std_error);
    return line;
}

// Accumulated sums for the mean and standard error of many quantities at once.
struct SumBlock {
    std::vector<double> sum;
    std::vector<double> sumsq;
    std::size_t n = 0;

    explicit SumBlock(std::size_t size = 0) : sum(size, 0.0), sumsq(size, 0.0) {}
    void add(std::size_t i, double v) {
        sum[i] += v;
        sumsq[i] += v * v;
    }
    void merge(const SumBlock& o) {
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += o.sum[i];
            sumsq[i] += o.sumsq[i];
        }
        n += o.n;
    }
    MeanWithError estimate(std::size_t i) const {
        MeanWithError out;
        if (n == 0) return out;
        const double dn = static_cast<double>(n);
        out.mean = sum[i] / dn;
        if (n > 1) {
            const double var = std::max(0.0, (sumsq[i] - sum[i] * out.mean) / (dn - 1.0));
            out.std_error = std::sqrt(var / dn);
        }
        return out;
    }
};

constexpr std::size_t kBlockSize = 512;

}  // namespace

double ks_critical_1pct(std::size_t n) {
    if (n == 0) throw std::invalid_argument("ks_critical_1pct: no samples");
    return kKolmogorov1pct / std::sqrt(static_cast<double>(n));
}

double ks_critical_1pct(std::size_t n, std::size_t m) {
    if (n == 0 || m == 0) throw std::invalid_argument("ks_critical_1pct: no samples");
    const double dn = static_cast<double>(n), dm = static_cast<double>(m);
    return kKolmogorov1pct * std::sqrt((dn + dm) / (dn * dm));
}

double ks_distance_gamma(std::span<const double> samples, double shape, double scale) {
    GammaParams p(shape, scale);
    std::vector<double> x(samples.begin(), samples.end());
    if (x.empty()) throw std::invalid_argument("ks_distance_gamma: no samples");
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double F = x[i] > 0.0 ? boost::math::gamma_p(p.shape, x[i] / p.scale) : 0.0;
        d = std::max({d, (i + 1) / n - F, F - i / n});
    }
    return d;
}

double ks_distance_two_sample(std::span<const double> a, std::span<const double> b) {
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    if (x.empty() || y.empty()) throw std::invalid_argument("ks_distance_two_sample: no samples");
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::abs(i / nx - j / ny));
    }
    return d;
}

bool MomentReport::moments_within(double sigmas) const {
    return std::all_of(lines.begin(), lines.end(), [&](const MomentLine& l) { return l.z <= sigmas; });
}

MomentReport gamma_marginal_test(std::span<const double> samples, int omega, double scale_ref, int max_order) {
    if (samples.size() < 2) throw std::invalid_argument("gamma_marginal_test: need at least two samples");
    GammaParams law(0.5 * omega, scale_ref);
    MomentReport report;
    report.samples = samples.size();
    std::vector<double> power(samples.size());
    for (int k = 1; k <= max_order; ++k) {
        for (std::size_t i = 0; i < samples.size(); ++i) power[i] = std::pow(samples[i], k);
        report.lines.push_back(moment_line(k, mean_with_error(power), gamma_moment(k, law)));
    }
    report.ks_distance = ks_distance_gamma(samples, law.shape, law.scale);
    report.ks_critical = ks_critical_1pct(samples.size());
    return report;
}

MomentReport replica_moment_report(const std::vector<std::vector<double>>& per_replica, int omega,
                                   double scale_ref) {
    if (per_replica.size() < 2) throw std::invalid_argument("replica_moment_report: need at least two replicas");
    GammaParams law(0.5 * omega, scale_ref);
    MomentReport report;
    report.samples = per_replica.size();
    const std::size_t orders = per_replica.front().size();
    std::vector<double> col(per_replica.size());
    for (std::size_t k = 0; k < orders; ++k) {
        for (std::size_t r = 0; r < per_replica.size(); ++r) col[r] = per_replica[r].at(k);
        report.lines.push_back(
            moment_line(static_cast<int>(k + 1), mean_with_error(col), gamma_moment(static_cast<unsigned>(k + 1), law)));
    }
    return report;
}

FactorizationReport joint_factorization_test(const std::vector<std::vector<double>>& rows) {
    if (rows.size() < 3) throw std::invalid_argument("joint_factorization_test: need at least three rows");
    const std::size_t n = rows.size(), d = rows.front().size();
    std::vector<MeanWithError> m(d);
    std::vector<double> col(n);
    std::vector<double> sd(d);
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t r = 0; r < n; ++r) col[r] = rows[r].at(a);
        m[a] = mean_with_error(col);
        sd[a] = m[a].std_error * std::sqrt(static_cast<double>(n));
    }
    FactorizationReport report;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a + 1; b < d; ++b) {
            for (std::size_t r = 0; r < n; ++r) col[r] = (rows[r][a] - m[a].mean) * (rows[r][b] - m[b].mean);
            CovarianceLine line;
            line.i = static_cast<int>(a);
            line.j = static_cast<int>(b);
            line.covariance = mean_with_error(col);
            line.normalized = sd[a] > 0 && sd[b] > 0 ? line.covariance.mean / (sd[a] * sd[b]) : 0.0;
            line.z = z_score(line.covariance.mean, 0.0, line.covariance.std_error);
            report.max_abs_normalized = std::max(report.max_abs_normalized, std::abs(line.normalized));
            report.max_z = std::max(report.max_z, line.z);
            report.pairs.push_back(line);
        }
    return report;
}

int InvarianceReport::exceedances(double sigmas) const {
    return static_cast<int>(std::count_if(lines.begin(), lines.end(), [&](const InvarianceLine& l) { return l.z > sigmas; }));
}

InvarianceReport equilibrium_invariance_test(const Environment& env, const InvariancePlan& plan) {
    const auto& temps = env.bath_temps();
    if (temps.empty()) throw std::invalid_argument("equilibrium_invariance_test: no baths");
    const double T = temps.front();
    for (double t : temps)
        if (t != T) throw std::invalid_argument("equilibrium_invariance_test: bath temperatures differ");
    if (!(T > 0.0)) throw std::invalid_argument("equilibrium_invariance_test: temperature must be positive");
    if (plan.checkpoints.empty() || plan.max_order < 1)
        throw std::invalid_argument("equilibrium_invariance_test: empty plan");
    auto checkpoints = plan.checkpoints;
    std::sort(checkpoints.begin(), checkpoints.end());

    const int sites = env.domain().interior_count();
    const int K = plan.max_order;
    const std::size_t C = checkpoints.size();
    auto slot = [&](std::size_t c, int i, int k) { return (c * sites + i) * K + (k - 1); };

    ForwardSimulator sim(env);
    const auto f = ScalarField::constant(T);
    const std::size_t blocks = (plan.replicas.replicas + kBlockSize - 1) / kBlockSize;
    auto parts = run_replicas(blocks, plan.replicas.workers, [&](std::size_t b) {
        SumBlock acc(C * sites * K);
        const std::size_t begin = b * kBlockSize;
        const std::size_t end = std::min(plan.replicas.replicas, begin + kBlockSize);
        Observer obs;
        obs.epochs = checkpoints;
        obs.on_epoch = [&](std::size_t c, const EnergyState& s) {
            for (int i = 0; i < sites; ++i) {
                double p = 1.0;
                for (int k = 1; k <= K; ++k) {
                    p *= s.xi[i];
                    acc.add(slot(c, i, k), p);
                }
            }
        };
        for (std::size_t r = begin; r < end; ++r) {
            RngStream init_rng(plan.replicas.seed, stream_id(StreamPurpose::initial, r));
            RngStream rng(plan.replicas.seed, stream_id(StreamPurpose::forward, r));
            sim.run(init_product_gamma(env, f, init_rng), checkpoints.back(), rng, &obs);
            ++acc.n;
        }
        return acc;
    });
    SumBlock total(C * sites * K);
    for (const auto& p : parts) total.merge(p);

    InvarianceReport report;
    for (std::size_t c = 0; c < C; ++c)
        for (int i = 0; i < sites; ++i)
            for (int k = 1; k <= K; ++k) {
                InvarianceLine line;
                line.time = checkpoints[c];
                line.site = i;
                line.order = k;
                line.empirical = total.estimate(slot(c, i, k));
                line.reference = gamma_moment(k, GammaParams(0.5 * env.omega(i), T));
                line.z = z_score(line.empirical.mean, line.reference, line.empirical.std_error);
                report.max_z = std::max(report.max_z, line.z);
                report.lines.push_back(line);
            }
    return report;
}

PairSplitReport pair_split_invariance_test(int omega1, int omega2, double T, std::size_t n, std::uint64_t seed) {
    GammaSampler g1(0.5 * omega1), g2(0.5 * omega2);
    BetaSampler split(BetaParams(0.5 * omega1, 0.5 * omega2));
    RngStream rng(seed, stream_id(StreamPurpose::auxiliary, 0));
    std::vector<double> after1(n), after2(n), fresh1(n), fresh2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = T * (g1(rng) + g2(rng));
        const double p = split(rng);
        after1[i] = p * s;
        after2[i] = (1.0 - p) * s;
        fresh1[i] = T * g1(rng);
        fresh2[i] = T * g2(rng);
    }
    PairSplitReport report;
    report.ks_first = ks_distance_two_sample(after1, fresh1);
    report.ks_second = ks_distance_two_sample(after2, fresh2);
    report.ks_critical = ks_critical_1pct(n, n);
    return report;
}

std::vector<HydroLine> hydro_comparison(const Environment& env, const ScalarField& f,
                                        const std::vector<std::vector<double>>& points, double t,
                                        const PdeSolution& reference, const ReplicaPlan& plan) {
    const auto& dom = env.domain();
    std::vector<int> sites;
    for (const auto& x : points) sites.push_back(dom.nearest_interior(x));
    const double t_micro = diffusive_time(t, dom.scale());
    ForwardSimulator sim(env);
    const std::size_t blocks = (plan.replicas + kBlockSize - 1) / kBlockSize;
    auto parts = run_replicas(blocks, plan.workers, [&](std::size_t b) {
        SumBlock acc(sites.size());
        const std::size_t begin = b * kBlockSize;
        const std::size_t end = std::min(plan.replicas, begin + kBlockSize);
        for (std::size_t r = begin; r < end; ++r) {
            RngStream init_rng(plan.seed, stream_id(StreamPurpose::initial, r));
            RngStream rng(plan.seed, stream_id(StreamPurpose::forward, r));
            auto run = sim.run(init_product_gamma(env, f, init_rng), t_micro, rng);
            for (std::size_t p = 0; p < sites.size(); ++p)
                acc.add(p, run.state.xi[sites[p]] * 2.0 / env.omega(sites[p]));
            ++acc.n;
        }
        return acc;
    });
    SumBlock total(sites.size());
    for (const auto& p : parts) total.merge(p);

    std::vector<HydroLine> out;
    for (std::size_t p = 0; p < sites.size(); ++p) {
        HydroLine line;
        line.x = points[p];
        line.site = sites[p];
        line.mc = total.estimate(p);
        line.pde = reference.value_at(points[p]);
        line.rel_error = std::abs(line.mc.mean - line.pde) / std::abs(line.pde);
        out.push_back(line);
    }
    return out;
}

std::vector<SteadyStateReplica> sample_steady_state(const Environment& env, const ScalarField& initial,
                                                    const SteadyStatePlan& plan) {
    const int L = env.domain().scale();
    const double L2 = static_cast<double>(L) * L;
    const double burn = plan.burn_in_factor * L2;
    const double window = plan.window_factor * L2;
    if (!(plan.average_spacing > 0.0) || !(window > 0.0) || !(plan.snapshot_spacing_factor > 0.0))
        throw std::invalid_argument("sample_steady_state: spacings and window must be positive");
    const auto steps = static_cast<std::size_t>(std::floor(window / plan.average_spacing));
    const auto snap_every = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(plan.snapshot_spacing_factor * L2 / plan.average_spacing)));
    const int sites = env.domain().interior_count();
    for (int s : plan.probe_sites)
        if (s < 0 || s >= sites) throw std::out_of_range("sample_steady_state: probe site outside the interior");

    Observer proto;
    proto.epochs.reserve(steps);
    for (std::size_t k = 1; k <= steps; ++k) proto.epochs.push_back(burn + k * plan.average_spacing);

    ForwardSimulator sim(env);
    return run_replicas(plan.replicas.replicas, plan.replicas.workers, [&](std::size_t r) {
        SteadyStateReplica out;
        out.mean.assign(sites, 0.0);
        out.power2.assign(sites, 0.0);
        out.power3.assign(sites, 0.0);
        out.power4.assign(sites, 0.0);
        out.adjacent.assign(std::max(0, sites - 1), 0.0);
        out.probe_snapshots.assign(plan.probe_sites.size(), {});
        Observer obs;
        obs.epochs = proto.epochs;
        obs.on_epoch = [&](std::size_t k, const EnergyState& s) {
            for (int i = 0; i < sites; ++i) {
                const double x = s.xi[i], x2 = x * x;
                out.mean[i] += x;
                out.power2[i] += x2;
                out.power3[i] += x2 * x;
                out.power4[i] += x2 * x2;
                if (i + 1 < sites) out.adjacent[i] += x * s.xi[i + 1];
            }
            if ((k + 1) % snap_every == 0)
                for (std::size_t p = 0; p < plan.probe_sites.size(); ++p)
                    out.probe_snapshots[p].push_back(s.xi[plan.probe_sites[p]]);
        };
        RngStream init_rng(plan.replicas.seed, stream_id(StreamPurpose::initial, r));
        RngStream rng(plan.replicas.seed, stream_id(StreamPurpose::forward, r));
        sim.run(init_product_gamma(env, initial, init_rng), obs.epochs.back(), rng, &obs);
        const double n = static_cast<double>(steps);
        for (auto* v : {&out.mean, &out.power2, &out.power3, &out.power4, &out.adjacent})
            for (double& x : *v) x /= n;
        return out;
    });
}

MeanWithError adjacent_normalized_covariance(const std::vector<SteadyStateReplica>& runs, int lo, int hi) {
    std::vector<double> per_replica;
    for (const auto& run : runs) {
        double acc = 0.0;
        int count = 0;
        for (int i = lo; i + 1 < hi; ++i) {
            const double cov = run.adjacent.at(i) - run.mean[i] * run.mean[i + 1];
            const double vi = run.power2[i] - run.mean[i] * run.mean[i];
            const double vj = run.power2[i + 1] - run.mean[i + 1] * run.mean[i + 1];
            acc += cov / std::sqrt(vi * vj);
            ++count;
        }
        if (count == 0) throw std::invalid_argument("adjacent_normalized_covariance: empty site range");
        per_replica.push_back(acc / count);
    }
    return mean_with_error(per_replica);
}

double bootstrap_stderr(std::span<const double> values, int b, std::uint64_t seed) {
    if (values.size() < 2 || b < 2) throw std::invalid_argument("bootstrap_stderr: need two values and two resamples");
    RngStream rng(seed, stream_id(StreamPurpose::auxiliary, 1));
    const auto n = values.size();
    std::vector<double> means(b);
    for (int k = 0; k < b; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += values[rng.below(n)];
        means[k] = s / static_cast<double>(n);
    }
    auto m = mean_with_error(means);
    return m.std_error * std::sqrt(static_cast<double>(b));
}

}  // namespace kmp

#include "kmp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kmp {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    : seed_(seed), stream_id_(stream_id) {}

void RngStream::refill() noexcept {
    std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
        static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
    std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                        static_cast<std::uint32_t>(seed_ >> 32)};
    auto out = philox4x32_10(ctr, key);
    ++counter_;
    buffer_[1] = static_cast<std::uint64_t>(out[0]) | (static_cast<std::uint64_t>(out[1]) << 32);
    buffer_[0] = static_cast<std::uint64_t>(out[2]) | (static_cast<std::uint64_t>(out[3]) << 32);
    buffered_ = 2;
}

double RngStream::exponential() noexcept { return -std::log(uniform()); }

double RngStream::normal() noexcept {
    for (;;) {
        double x = 2.0 * uniform() - 1.0;
        double y = 2.0 * uniform() - 1.0;
        double s = x * x + y * y;
        if (s < 1.0 && s > 0.0) return x * std::sqrt(-2.0 * std::log(s) / s);
    }
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = (*this)();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

GammaSampler::GammaSampler(double shape) : shape_(shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) {
        throw std::invalid_argument("GammaSampler: shape must be positive and finite");
    }
    exponential_ = (shape == 1.0);
    if (shape == std::floor(shape) && shape <= 8.0) erlang_ = static_cast<int>(shape);
    boost_ = shape < 1.0;
    double base = boost_ ? shape + 1.0 : shape;
    d_ = base - 1.0 / 3.0;
    c_ = 1.0 / std::sqrt(9.0 * d_);
    inv_shape_ = 1.0 / shape;
}

double GammaSampler::operator()(RngStream& rng) const noexcept {
    if (exponential_) return rng.exponential();
    if (erlang_ > 0) {
        double prod = 1.0;
        for (int i = 0; i < erlang_; ++i) prod *= rng.uniform();
        return -std::log(prod);
    }
    double g;
    for (;;) {
        double x = rng.normal();
        double v = 1.0 + c_ * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = rng.uniform();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2 ||
            std::log(u) < 0.5 * x2 + d_ * (1.0 - v + std::log(v))) {
            g = d_ * v;
            break;
        }
    }
    if (boost_) g *= std::exp(std::log(rng.uniform()) * inv_shape_);
    return g;
}

namespace {
constexpr int kMaxOrderStatistic = 7;
}

BetaSampler::BetaSampler(BetaParams p)
    : ga_(p.a), gb_(p.b), uniform_(p.a == 1.0 && p.b == 1.0), arcsine_(p.a == 0.5 && p.b == 0.5) {
    if (!uniform_ && p.a == std::floor(p.a) && p.b == std::floor(p.b) && p.a + p.b - 1.0 <= kMaxOrderStatistic) {
        order_n_ = static_cast<int>(p.a + p.b) - 1;
        order_k_ = static_cast<int>(p.a) - 1;
    }
}

double BetaSampler::operator()(RngStream& rng) const noexcept {
    if (uniform_) return rng.uniform();
    if (arcsine_) {
        const double s = std::sin(0.5 * std::numbers::pi * rng.uniform());
        return s * s;
    }
    if (order_n_ > 0) {
        std::array<double, kMaxOrderStatistic> u;
        for (int i = 0; i < order_n_; ++i) u[i] = rng.uniform();
        std::nth_element(u.begin(), u.begin() + order_k_, u.begin() + order_n_);
        return u[order_k_];
    }
    for (;;) {
        double x = ga_(rng);
        double y = gb_(rng);
        double s = x + y;
        // Both draws can underflow for very small shapes; redraw rather than
        // return an endpoint.
        if (s > 0.0) {
            double q = x / s;
            if (q > 0.0 && q < 1.0) return q;
        }
    }
}

double sample_gamma(const GammaParams& p, RngStream& rng) {
    return p.scale * GammaSampler(p.shape)(rng);
}

double sample_beta(const BetaParams& p, RngStream& rng) { return BetaSampler(p)(rng); }

double log_gamma(double x) noexcept {
    int sign = 0;
    return ::lgamma_r(x, &sign);
}

double log_beta(double a, double b) noexcept {
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double gamma_moment(unsigned k, const GammaParams& p) {
    if (k == 0) return 1.0;
    double log_value = k * std::log(p.scale) + log_gamma(p.shape + k) - log_gamma(p.shape);
    double value = std::exp(log_value);
    if (!std::isfinite(value)) {
        throw std::overflow_error("gamma_moment: value exceeds the double range");
    }
    return value;
}

double labeled_subset_prob(unsigned n, unsigned l, const BetaParams& p) {
    if (l > n) throw std::domain_error("labeled_subset_prob: subset larger than pool");
    return std::exp(log_beta(l + p.a, (n - l) + p.b) - log_beta(p.a, p.b));
}

double beta_binomial_pmf(unsigned n, long k, const BetaParams& p) {
    if (k < 0 || k > static_cast<long>(n)) {
        throw std::domain_error("beta_binomial_pmf: k outside [0, n]");
    }
    auto kk = static_cast<double>(k);
    double log_choose = log_gamma(n + 1.0) - log_gamma(kk + 1.0) - log_gamma(n - kk + 1.0);
    return std::exp(log_choose + log_beta(kk + p.a, n - kk + p.b) - log_beta(p.a, p.b));
}

LabeledSplit sample_labeled_split(std::span<const int> particles, const BetaParams& p,
                                  RngStream& rng) {
    LabeledSplit out;
    if (particles.empty()) return out;
    double q = sample_beta(p, rng);
    for (int id : particles) {
        if (rng.uniform() < q) {
            out.kept.push_back(id);
        } else {
            out.sent.push_back(id);
        }
    }
    return out;
}

}  // namespace kmp

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace kmp {

/// Counter-based random stream (Philox4x32-10).
///
/// The 64-bit seed is the Philox key and the stream id occupies the upper
/// half of the 128-bit counter, so two streams with different (seed,
/// stream_id) pairs can never produce overlapping blocks. Each stream has
/// 2^64 blocks of 128 bits before the low counter wraps.
class RngStream {
  public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (buffered_ == 0) refill();
        return buffer_[--buffered_];
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() noexcept {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Unit-rate exponential variate.
    double exponential() noexcept;

    /// Standard normal variate (Marsaglia polar method; no cached pair).
    double normal() noexcept;

    /// Uniform integer in [0, n), n > 0 (Lemire's multiply-shift with rejection).
    std::uint64_t below(std::uint64_t n) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

  private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
};

struct GammaParams {
    double shape;
    double scale;

    GammaParams(double shape_, double scale_) : shape(shape_), scale(scale_) {
        if (!(shape > 0.0) || !(scale > 0.0)) {
            throw std::invalid_argument("GammaParams: shape and scale must be positive");
        }
    }
};

struct BetaParams {
    double a;
    double b;

    BetaParams(double a_, double b_) : a(a_), b(b_) {
        if (!(a > 0.0) || !(b > 0.0)) {
            throw std::invalid_argument("BetaParams: a and b must be positive");
        }
    }
};

/// Unit-scale Gamma sampler with precomputed Marsaglia-Tsang constants.
/// Shapes below one use the boost Gamma(a) = Gamma(a+1) * U^(1/a).
class GammaSampler {
  public:
    explicit GammaSampler(double shape);

    double operator()(RngStream& rng) const noexcept;
    double shape() const noexcept { return shape_; }

  private:
    double shape_;
    double d_;
    double c_;
    double inv_shape_;
    bool boost_;
    bool exponential_;
    int erlang_ = 0;  // small integer shape: sum of exponentials
};

/// Beta sampler. Small integer parameters use the a-th order statistic of
/// a+b-1 uniforms, Beta(1/2,1/2) the arcsine law sin^2(pi U/2); anything else
/// is the ratio of two unit Gamma draws.
class BetaSampler {
  public:
    explicit BetaSampler(BetaParams p);

    double operator()(RngStream& rng) const noexcept;

  private:
    GammaSampler ga_;
    GammaSampler gb_;
    bool uniform_;
    bool arcsine_;
    int order_n_ = 0;  // > 0 selects the order-statistic path
    int order_k_ = 0;
};

double sample_gamma(const GammaParams& p, RngStream& rng);
double sample_beta(const BetaParams& p, RngStream& rng);

/// log Gamma(x) for x > 0 without touching the global signgam.
double log_gamma(double x) noexcept;
double log_beta(double a, double b) noexcept;

/// c^k Gamma(shape+k) / Gamma(shape). Throws std::overflow_error when the
/// result is not representable.
double gamma_moment(unsigned k, const GammaParams& p);

/// C(n,k) B(k+a, n-k+b) / B(a,b), evaluated in log space.
double beta_binomial_pmf(unsigned n, long k, const BetaParams& p);

/// Probability that one specific labeled subset of size l out of n pooled
/// particles ends up at the first endpoint.
double labeled_subset_prob(unsigned n, unsigned l, const BetaParams& p);

struct LabeledSplit {
    std::vector<int> kept;  // assigned to the first endpoint u
    std::vector<int> sent;  // assigned to the second endpoint v
};

/// Draws q ~ Beta(a,b) and keeps each particle at u independently with
/// probability q.
LabeledSplit sample_labeled_split(std::span<const int> particles, const BetaParams& p,
                                  RngStream& rng);

}  // namespace kmp

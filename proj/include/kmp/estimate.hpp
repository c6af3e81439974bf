#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace kmp {

struct MeanWithError {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Sample mean and its standard error (n-1 variance) of independent values.
inline MeanWithError mean_with_error(std::span<const double> values) {
    MeanWithError out;
    const auto n = values.size();
    if (n == 0) return out;
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t k = 0;
    for (double v : values) {
        ++k;
        double delta = v - mean;
        mean += delta / static_cast<double>(k);
        m2 += delta * (v - mean);
    }
    out.mean = mean;
    out.std_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return out;
}

/// |value - reference| in units of std_error. Differences at round-off level
/// count as zero, so a deterministic estimate (std_error 0) can still match.
inline double z_score(double value, double reference, double std_error) {
    const double diff = std::abs(value - reference);
    if (diff <= 1e-12 * std::max(std::abs(value), std::abs(reference))) return 0.0;
    if (std_error > 0.0) return diff / std_error;
    return std::numeric_limits<double>::infinity();
}

}  // namespace kmp

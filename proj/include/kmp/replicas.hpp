#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace kmp {

/// Stream ids are (purpose << 48) | replica, so every pipeline stage draws
/// from its own disjoint block of streams.
enum class StreamPurpose : std::uint64_t {
    environment = 1,
    forward = 2,
    dual = 3,
    initial = 4,
    auxiliary = 5,
};

inline std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t replica) {
    return (static_cast<std::uint64_t>(purpose) << 48) | replica;
}

/// Evaluates fn(r) for r = 0..n-1 on `workers` threads with a fixed
/// contiguous partition of indices. Results are returned in replica order,
/// so any reduction over them is independent of the worker count.
template <class Fn>
auto run_replicas(std::size_t n, unsigned workers, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<R> out(n);
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t r = 0; r < n; ++r) out[r] = fn(r);
        return out;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t begin = n * w / workers;
        std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
            try {
                for (std::size_t r = begin; r < end; ++r) out[r] = fn(r);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace kmp

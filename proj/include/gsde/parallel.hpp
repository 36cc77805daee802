#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gsde {

namespace detail {
inline std::atomic<std::size_t>& thread_setting() {
    static std::atomic<std::size_t> value{0};
    return value;
}
}  // namespace detail

/// Worker count used by parallel sweeps; 0 means hardware concurrency.
inline void set_thread_count(std::size_t k) { detail::thread_setting() = k; }

inline std::size_t thread_count() {
    const std::size_t k = detail::thread_setting();
    if (k != 0) return k;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results written to slot i are independent of the thread count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                const std::size_t lo = w * chunk;
                const std::size_t hi = std::min(n, lo + chunk);
                try {
                    for (std::size_t i = lo; i < hi; ++i) body(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace gsde

#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace radhop {

int hardware_threads();

// Process-wide default used when a call site passes threads == 0.
// 0 means "use all hardware threads".
int default_threads();
void set_default_threads(int n);

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    int d = default_threads();
    return d > 0 ? d : hardware_threads();
}

// Runs fn(i) for i in [0, n) on contiguous chunks, one chunk per worker.
// Every iteration must write only to its own output slot; results are then
// identical for any thread count. Exceptions are rethrown on the caller.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn, int threads = 0) {
    if (n <= 0) return;
    int t = std::min<std::int64_t>(resolve_threads(threads), n);
    if (t <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(t));
    const std::int64_t chunk = (n + t - 1) / t;
    for (int w = 0; w < t; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
        if (lo >= hi) break;
        workers.emplace_back([&, lo, hi] {
            try {
                for (std::int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    if (err) std::rethrow_exception(err);
}

} // namespace radhop

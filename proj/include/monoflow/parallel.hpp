#pragma once

// Static-partition parallel loop. Each index is computed by exactly one
// worker and results are written to per-index slots, so any reduction done
// afterwards in index order is independent of the thread count.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace monoflow {

template <class F>
void parallelFor(std::size_t n, int threads, F&& body) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads < 1 ? 1 : threads, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Pairwise summation in a fixed tree order.
inline double pairwiseSum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwiseSum(v, h) + pairwiseSum(v + h, n - h);
}

inline double pairwiseSum(const std::vector<double>& v) { return pairwiseSum(v.data(), v.size()); }

}  // namespace monoflow

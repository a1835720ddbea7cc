#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace slicesim {

/// Worker count: SLICESIM_THREADS if set (minimum 1), otherwise the hardware concurrency.
inline int worker_count() {
    if (const char* v = std::getenv("SLICESIM_THREADS")) {
        const int n = std::atoi(v);
        return std::max(1, n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Results must be written to
/// index-addressed storage so reduction order does not depend on scheduling. The first
/// exception (lowest index) is rethrown after all workers finish.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(n, worker_count());
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace slicesim

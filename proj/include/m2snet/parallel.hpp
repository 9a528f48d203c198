#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace m2s {

/// Worker cap for fan-out loops, bounded by the M2SNET_WORKERS environment
/// variable when set.
inline int worker_count() {
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (const char* env = std::getenv("M2SNET_WORKERS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) workers = std::min(workers, cap);
    }
    return workers;
}

/// Run fn(i) for i in [0, n) across worker threads. Callers write results
/// into per-index slots, so the merge is deterministic regardless of
/// scheduling.
inline void parallel_for(long n, const std::function<void(long)>& fn) {
    const int workers = std::min<long>(worker_count(), n) > 0
                            ? static_cast<int>(std::min<long>(worker_count(), n))
                            : 1;
    if (workers <= 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (long i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace m2s

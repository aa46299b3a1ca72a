#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace diffloco {

/// Worker count: DIFFLOCO_THREADS if set and positive, else hardware concurrency.
inline int worker_count() {
    if (const char* env = std::getenv("DIFFLOCO_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) on up to `workers` threads with a static strided split.
/// Results must be written to per-index slots; the first exception (lowest index) is rethrown.
template <class Body>
void parallel_for(int n, int workers, Body&& body) {
    workers = std::clamp(workers, 1, std::max(n, 1));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (int i = w; i < n; i += workers) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[static_cast<std::size_t>(i)] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace diffloco

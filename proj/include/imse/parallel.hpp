#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace imse {

/// Worker cap: IMSE_LAB_THREADS when set to a positive integer, otherwise
/// the hardware concurrency.
inline int thread_limit() {
    if (const char *env = std::getenv("IMSE_LAB_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (const std::exception &) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Work items must write only to their own
/// slot so the result is independent of the thread count.
inline void parallel_for(int64_t n, const std::function<void(int64_t)> &fn) {
    const int64_t workers = std::min<int64_t>(thread_limit(), n);
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    for (int64_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int64_t i = t; i < n; i += workers) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto &th : pool) th.join();
    for (auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace imse

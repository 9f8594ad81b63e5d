#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace riskbal {

// Resolves a worker-count request; 0 means one worker per hardware thread.
inline std::size_t resolve_threads(std::size_t requested, std::size_t tasks)
{
    std::size_t t = requested ? requested : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    return std::max<std::size_t>(1, std::min(t, tasks));
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is visited
// exactly once; callers write results into slot i, so output order never depends
// on scheduling. The first exception thrown by any task is rethrown.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn)
{
    const auto workers = resolve_threads(threads, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace riskbal

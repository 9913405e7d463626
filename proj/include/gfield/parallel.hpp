#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gfield {

namespace detail {
inline std::atomic<int>& default_jobs_slot()
{
    static std::atomic<int> jobs{1};
    return jobs;
}
}  // namespace detail

/// Worker count used by the Monte Carlo engines when none is passed.
inline int default_jobs() { return detail::default_jobs_slot().load(); }

inline void set_default_jobs(int jobs) { detail::default_jobs_slot().store(std::max(1, jobs)); }

/// Runs body(i) for i in [0, n) on up to `jobs` threads using static
/// contiguous chunks. Bodies must only write to slots owned by their index;
/// any reduction happens afterwards in index order, so results never depend
/// on the worker count.
template <class Body>
void parallel_for(std::size_t n, Body&& body, int jobs = default_jobs())
{
    const std::size_t workers = std::min<std::size_t>(std::max(1, jobs), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }

    // One slot per worker; the lowest failing chunk wins so the reported
    // error is the one with the smallest index regardless of scheduling.
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace gfield

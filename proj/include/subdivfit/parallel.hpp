#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace subdivfit {

/// Worker count from SUBDIVFIT_THREADS (0 or unset = hardware concurrency).
inline unsigned thread_count()
{
    unsigned n = 0;
    if (const char* env = std::getenv("SUBDIVFIT_THREADS")) {
        try {
            n = unsigned(std::stoul(env));
        } catch (...) {
            n = 0;
        }
    }
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

/// Runs body(i) for i in [begin, end) over contiguous chunks. Each index is
/// processed exactly once, so writes to per-index slots are deterministic.
template <typename Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body)
{
    if (end <= begin) return;
    const std::size_t count = end - begin;
    const std::size_t workers = std::min<std::size_t>(thread_count(), (count + 255) / 256);
    if (workers <= 1) {
        for (std::size_t i = begin; i < end; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex lock;
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = begin + w * chunk;
        const std::size_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(lock);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace subdivfit

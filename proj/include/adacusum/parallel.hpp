#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace adacusum {

/// 0 means "use every hardware thread".
inline std::size_t resolve_workers(std::size_t requested) noexcept {
    if (requested != 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls body(begin, end, worker) over contiguous chunks of [0, count).
/// Bodies must only write to per-index slots so that the result does not
/// depend on the worker count; reductions happen afterwards, in index order.
template <typename Body>
void parallel_chunks(std::size_t count, std::size_t workers, Body&& body) {
    workers = std::min(resolve_workers(workers), std::max<std::size_t>(1, count));
    if (workers <= 1) {
        body(std::size_t{0}, count, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end, w] {
            try {
                body(begin, end, w);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace adacusum

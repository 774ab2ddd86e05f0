#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace mmrec {

// Run fn(begin, end) over disjoint chunks of [0, n). Each index is written by
// exactly one worker, so results are identical for any thread count.
template <class Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
    if (n <= 0) return;
    const int workers = static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(threads, n)));
    if (workers == 1) {
        fn(std::int64_t{0}, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

// Per-index form of parallel_for; same disjoint-write guarantee.
template <class Fn>
void parallel_for_each(std::int64_t n, int threads, Fn&& fn) {
    parallel_for(n, threads, [&fn](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
    });
}

}  // namespace mmrec

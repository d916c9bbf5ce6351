// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace rayrope {

/// Process-wide worker count for parallel_for. 1 disables threading.
int parallel_threads();
void set_parallel_threads(int n);

/// Splits [0, n) into at most parallel_threads() contiguous chunks and runs
/// fn(begin, end) on each. Every index is handled by exactly one chunk in
/// ascending order, so results are bitwise reproducible for a fixed split.
template <class Fn>
void parallel_for(std::int64_t n, std::int64_t grain, Fn&& fn) {
    const int threads = parallel_threads();
    if (threads <= 1 || n < 2 * grain) {
        if (n > 0) fn(std::int64_t{0}, n);
        return;
    }
    const int chunks = static_cast<int>(std::min<std::int64_t>(threads, std::max<std::int64_t>(1, n / grain)));
    if (chunks <= 1) {
        fn(std::int64_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(chunks) - 1);
    const std::int64_t step = (n + chunks - 1) / chunks;
    for (int c = 1; c < chunks; ++c) {
        const std::int64_t b = c * step;
        const std::int64_t e = std::min<std::int64_t>(n, b + step);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(std::int64_t{0}, std::min<std::int64_t>(n, step));
    for (auto& t : pool) t.join();
}

} // namespace rayrope

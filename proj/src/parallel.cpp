// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/parallel.hpp"

#include <atomic>

namespace rayrope {

namespace {
std::atomic<int> g_threads{1};
}

int parallel_threads() { return g_threads.load(std::memory_order_relaxed); }

void set_parallel_threads(int n) {
    g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

} // namespace rayrope

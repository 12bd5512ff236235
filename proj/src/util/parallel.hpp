#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace coseq::util {

/// Run fn(i) for i in [0,n) on up to `threads` workers. Items must be
/// independent; results land wherever fn writes them, so the outcome is
/// identical to the serial order. threads <= 1 runs inline; 0 picks the
/// hardware count.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads == 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads < 1) threads = 1;
        if (threads > 16) threads = 16;
    }
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    int workers = std::min(threads, n);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([w, n, workers, &fn]() {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace coseq::util

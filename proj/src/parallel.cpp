#include "fblab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace fblab {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int threads) { g_threads.store(std::max(1, threads)); }

int thread_count() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    const int workers = std::min<std::size_t>(g_threads.load(), n);
    if (workers <= 1) {
        body(0, n);
        return;
    }
    // Chunk size is a function of n alone so the partition never depends on
    // the worker count; workers race only for *which* chunk they run next.
    const std::size_t chunk = std::max<std::size_t>(1, (n + 255) / 256);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= n) return;
            body(begin, std::min(begin + chunk, n));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
}

} // namespace fblab

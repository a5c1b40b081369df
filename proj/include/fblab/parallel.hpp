#pragma once

#include <cstddef>
#include <functional>

// Deterministic work sharing: the loop is cut into fixed-size chunks that
// depend only on the trip count, workers write disjoint ranges, and no
// floating-point reduction happens inside a parallel region. Results are
// therefore identical for every thread count.

namespace fblab {

/// Global worker count (1 = run everything inline). Thread-safe to read.
void set_thread_count(int threads);
int thread_count();

/// Calls body(begin, end) over disjoint chunks covering [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

} // namespace fblab

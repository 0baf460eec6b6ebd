#pragma once

#include <cstddef>
#include <functional>

namespace g2flow::par {

// Number of threads used by parallel_for. 0 means auto (G2FLOW_THREADS
// environment variable, else hardware concurrency). Call before heavy work;
// changing it tears down and rebuilds the pool.
void set_threads(int n);
int threads();

// Run fn(begin, end) over disjoint chunks covering [0, n). Chunk boundaries
// depend only on n and grain, never on the thread count, so any kernel whose
// output elements are written by exactly one chunk is reproducible bit for
// bit at every thread count. Reductions do not go through here; they are
// serial pairwise trees (see kernels.hpp).
//
// Exceptions thrown by fn are captured and rethrown (first one wins) after
// all workers quiesce. Nested calls run inline on the calling thread.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace g2flow::par

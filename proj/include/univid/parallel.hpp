#pragma once

#include <cstdint>
#include <functional>

namespace univid {

// Worker cap. Initialised from UNIVID_THREADS (default: hardware concurrency).
int num_threads();
void set_num_threads(int n);

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker, so each index is always processed start-to-finish by one thread and
// results do not depend on the thread count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn, int64_t min_per_thread = 1);

}  // namespace univid

#pragma once

#include <cstddef>
#include <functional>

namespace coverhead {

// Parallelism cap: COVERHEAD_THREADS if set (>= 1), otherwise the hardware
// concurrency. Folds, units, and image batches are scheduled under this cap.
int thread_budget();

// Run fn(i) once for every i in [0, n) on up to `threads` workers. Tasks must
// be independent; the first exception is rethrown on the calling thread after
// all workers join. Results keyed by index are reproducible for any budget.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace coverhead

#pragma once

#include <cstddef>
#include <functional>

namespace ctrliter {

/// Worker count from CTRL_ITER_THREADS, defaulting to the hardware
/// concurrency (at least 1).
std::size_t default_worker_count();

/// Runs body(i) for i in [0, count) on up to `workers` threads. Each index is
/// handled exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception thrown by any
/// task is rethrown after all workers have joined.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t workers = default_worker_count());

}  // namespace ctrliter

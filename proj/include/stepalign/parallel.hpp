#pragma once

#include <cstddef>
#include <functional>

namespace stepalign {

/// Worker count from STEPALIGN_THREADS (0 or unset = hardware concurrency).
unsigned worker_count();

/// Runs fn(i) for i in [0, n) across worker_count() threads. Each index is
/// visited exactly once; the first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace stepalign

#pragma once

#include <cstddef>
#include <functional>

namespace eegpolicy {

// Process-wide worker count used by parallel_for. 0 means hardware concurrency.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Calls fn(i) for i in [0, n). Work is split into contiguous chunks; callers write
// results into per-index slots so the outcome never depends on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace eegpolicy

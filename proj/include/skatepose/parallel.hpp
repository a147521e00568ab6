#pragma once

#include <cstddef>
#include <functional>

namespace skatepose {

// Runs f(i) for i in [0, n) on up to `threads` workers with contiguous
// chunks. The first exception thrown by any call is rethrown. Callers keep
// results deterministic by writing to per-index slots.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& f);

}  // namespace skatepose

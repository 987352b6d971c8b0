#pragma once

#include <cstddef>
#include <functional>

namespace dinoprobe {

/// Logical CPU count, at least 1.
std::size_t default_jobs();

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Indices are handed
/// out dynamically, so fn must only write to per-index state. The first
/// exception thrown by any fn is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

} // namespace dinoprobe

#pragma once

#include <cstddef>
#include <functional>

namespace gridcal {

// Worker cap for library-internal parallel loops. Defaults to the
// GRIDCAL_THREADS environment variable, else 1.
unsigned max_threads();
void set_max_threads(unsigned n);

/// Runs fn(i) for i in [0, n). Index i is always handled by worker i % k, and
/// callers write results into per-index slots, so outputs do not depend on
/// the worker count. The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace gridcal

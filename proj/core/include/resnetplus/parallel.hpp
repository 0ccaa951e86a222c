#pragma once

#include <cstddef>
#include <functional>

namespace rnp {

/// Worker cap: RESNETPLUS_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers must not
/// let results depend on which worker ran an index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace rnp

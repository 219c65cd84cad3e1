#pragma once

#include <cstddef>
#include <functional>

namespace profiler {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Workers pull indices
/// from a shared counter; callers that need determinism must write results
/// into per-index slots and reduce them in index order afterwards.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// --threads 0 means "pick": PROFILER_THREADS if set, else 1.
int resolve_threads(int requested);

}  // namespace profiler

#pragma once

#include <cstddef>
#include <functional>

namespace congrpo {

// Hardware concurrency, at least 1.
int default_jobs();

// Runs fn(i) for i in [0, n) on up to `jobs` threads (jobs <= 0 means
// default_jobs()). Each index runs exactly once; callers write results into
// per-index slots and reduce afterwards in index order, which keeps results
// independent of the worker count. The first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace congrpo

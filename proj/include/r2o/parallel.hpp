#pragma once

#include <cstddef>
#include <functional>

namespace r2o {

// Worker count used by parallel_chunks. 0 = keep current; returns the
// effective value. Defaults to min(hardware_concurrency, 4).
int set_threads(int n);
int threads();

// Runs fn(chunk_index, begin, end) over [0, n_items) split into exactly
// n_chunks contiguous chunks. The chunk grid is fixed by n_chunks alone,
// never by the worker count, so any per-chunk accumulators reduce to
// bit-identical results regardless of how many threads execute.
void parallel_chunks(std::size_t n_items, std::size_t n_chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace r2o

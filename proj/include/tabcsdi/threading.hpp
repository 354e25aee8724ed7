#pragma once

#include <cstdint>
#include <functional>

namespace tabcsdi {

// Worker count for internal data parallelism (matmul row tiling). Work is
// partitioned so each output element is written by exactly one worker with a
// fixed sequential accumulation order, so results are bit-identical for any
// thread count. set_num_threads(1) is the strict single-threaded mode.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over disjoint chunks of [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

} // namespace tabcsdi

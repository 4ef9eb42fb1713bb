#pragma once

// Fork-join pool used by the compute kernels. Work items are indexed tasks;
// every task writes a disjoint output range, so results do not depend on the
// worker count. DSPK_THREADS overrides the default (hardware concurrency).

#include <cstdint>
#include <functional>

namespace dspk {

int thread_count();

// Runs fn(i) for i in [0, n). Executes inline when n == 1 or the pool has a
// single thread.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace dspk

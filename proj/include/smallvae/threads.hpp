// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace smallvae {

// Worker cap: min(hardware_concurrency, SMALLVAE_THREADS) when the env var is
// set, at least 1.
int worker_count();

// Runs fn over contiguous chunks of [0, n), one chunk per worker; chunk 0
// executes on the calling thread. Chunks must write disjoint outputs.
// Ordering-sensitive reductions belong to the caller, after the join, so
// results do not depend on the worker count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace smallvae

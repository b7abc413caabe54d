#pragma once

#include <cstddef>
#include <functional>

namespace rhbsde {

// Global worker count: 0 means "use hardware concurrency".  Reductions in
// this library accumulate per fixed-size block and combine blocks in index
// order, so numerical results do not depend on the worker count.
void set_thread_count(int n);
int thread_count();

// Fixed block size used by every blocked loop and reduction.
inline constexpr std::size_t kBlockSize = 4096;

// Runs fn(begin, end) over [0, n) split into kBlockSize blocks.  Blocks are
// distributed over workers; fn must only write to disjoint per-item or
// per-block state.
void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace rhbsde

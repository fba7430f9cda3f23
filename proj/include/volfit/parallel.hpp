#pragma once

#include <cstddef>
#include <functional>

namespace volfit {

// Worker count used by parallel_for; 0 selects std::thread::hardware_concurrency().
void set_thread_count(int n);
int thread_count();

// Calls fn(begin, end) on consecutive blocks of `grain` indices. Block boundaries
// depend only on n and grain, so per-block results are identical for any worker count.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace volfit

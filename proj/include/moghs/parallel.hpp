#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace moghs {

/// Worker count from MOGHS_THREADS (default 1).
inline int thread_count() {
  if (const char* env = std::getenv("MOGHS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

/// Calls fn(i) for i in [0, n) over up to `threads` workers. fn must only write to slot i.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace moghs

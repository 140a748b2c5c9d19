#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace enkflab {

// Process-wide default worker count (CLI --threads lands here).
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> value{0};
  return value;
}

inline int default_threads() {
  const int v = thread_setting().load();
  if (v > 0) return v;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

inline void set_default_threads(int n) { thread_setting().store(n); }

// Runs fn(i) for i in [0, n). Each index is handled entirely by one worker,
// so results are identical for any thread count provided fn(i) writes only
// to slot i. Contiguous block partition, no work stealing.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn, int threads = 0) {
  if (threads <= 0) threads = default_threads();
  if (threads <= 1 || n < 2) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace enkflab

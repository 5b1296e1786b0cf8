#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace balsam::detail {

inline int resolve_threads(int threads, int total) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  return std::max(1, std::min(threads, total));
}

/// Runs fn(begin, end, chunk_index) over a partition of [0, total) on
/// `threads` workers (pre-resolved via resolve_threads). Replicate seeds are
/// derived from replicate indices by the caller, so results do not depend on
/// the partition; per-chunk accumulators indexed by chunk_index keep the
/// merge deterministic.
inline void parallel_chunks(int total, int threads,
                            const std::function<void(int, int, int)>& fn) {
  if (threads <= 1) {
    fn(0, total, 0);
    return;
  }
  std::vector<std::thread> workers;
  const int chunk = (total + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(total, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back(fn, begin, end, t);
  }
  for (auto& w : workers) w.join();
}

}  // namespace balsam::detail

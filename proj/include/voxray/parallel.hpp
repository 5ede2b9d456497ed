// Minimal blocked parallel_for. Work is split into a fixed number of blocks
// chosen by the caller, so results that depend on block boundaries (for
// example ordered gradient reduction) do not change with the thread count.

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace voxray {

// Invokes body(block_index, begin, end) for each of block_count contiguous
// index blocks covering [0, count). Blocks are distributed over up to
// max_threads hardware threads; with one thread it degenerates to a loop.
inline void parallel_blocks(size_t count, size_t block_count,
                            const std::function<void(size_t, size_t, size_t)>& body,
                            unsigned max_threads = 0) {
  if (count == 0 || block_count == 0) return;
  block_count = std::min(block_count, count);
  unsigned hw = std::thread::hardware_concurrency();
  unsigned threads = max_threads == 0 ? hw : std::min(max_threads, hw);
  threads = std::max(1u, std::min<unsigned>(threads, unsigned(block_count)));

  auto run_block = [&](size_t b) {
    size_t begin = count * b / block_count;
    size_t end = count * (b + 1) / block_count;
    if (begin < end) body(b, begin, end);
  };

  if (threads <= 1) {
    for (size_t b = 0; b < block_count; b++) run_block(b);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; t++) {
    pool.emplace_back([&, t] {
      for (size_t b = t; b < block_count; b += threads) run_block(b);
    });
  }
  for (auto& th : pool) th.join();
}

// Plain data-parallel loop over [0, count) with unspecified chunking; only
// for bodies whose result does not depend on execution order.
inline void parallel_for(size_t count, const std::function<void(size_t, size_t)>& range_body,
                         unsigned max_threads = 0) {
  unsigned hw = std::thread::hardware_concurrency();
  unsigned threads = max_threads == 0 ? hw : std::min(max_threads, hw);
  threads = std::max(1u, threads);
  size_t block_count = std::min<size_t>(count, size_t(threads) * 4);
  parallel_blocks(count, block_count, [&](size_t, size_t b, size_t e) { range_body(b, e); },
                  threads);
}

}  // namespace voxray

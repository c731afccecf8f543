#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vqdm {

// Worker count: explicit value if non-zero, else $VQDM_THREADS, else the
// hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

// Calls body(i) for i in [0, n) on up to `threads` workers using contiguous
// chunks. Each index is visited exactly once; callers write results into
// per-index slots, so the output never depends on scheduling.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  if (threads > n) threads = n;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = n * t / threads, end = n * (t + 1) / threads;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace vqdm

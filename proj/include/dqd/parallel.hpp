#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace dqd {

/// 0 maps to the hardware thread count.
inline unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written by index; the exception from the lowest failing index is rethrown.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::atomic<std::size_t>& next) {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::atomic<std::size_t> next{0};
  if (workers <= 1) {
    body(next);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body, std::ref(next));
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dqd

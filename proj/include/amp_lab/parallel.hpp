#ifndef AMP_LAB_PARALLEL_HPP
#define AMP_LAB_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace amp_lab {

// Worker count: hardware concurrency, capped by AMP_LAB_THREADS when set.
inline int worker_count() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("AMP_LAB_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) n = std::min(n, cap);
    } catch (const std::exception&) {
    }
  }
  return n;
}

// Calls fn(i) for i in [0, n) on up to `threads` workers. Tasks write to
// disjoint slots, so results never depend on scheduling. The first exception
// (lowest index) is rethrown after all workers finish.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Pairwise summation, independent of how the inputs were produced.
template <class T>
T pairwise_sum(const T* v, std::size_t n, const T& zero) {
  if (n == 0) return zero;
  if (n == 1) return v[0];
  const std::size_t h = n / 2;
  return pairwise_sum(v, h, zero) + pairwise_sum(v + h, n - h, zero);
}

}  // namespace amp_lab

#endif

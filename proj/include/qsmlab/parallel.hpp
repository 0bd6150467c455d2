#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qsmlab {

// Worker count; QSMLAB_THREADS caps it. Results never depend on the value.
inline unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* s = std::getenv("QSMLAB_THREADS")) {
    int v = std::atoi(s);
    if (v >= 1) n = std::min(n, static_cast<unsigned>(v));
  }
  return n;
}

// Runs f(i) for i in [0, n). Each index is handled exactly once, so callers
// writing into per-index slots get order-independent results.
template <class F>
void parallel_for(int n, F&& f) {
  unsigned workers = std::min<unsigned>(thread_count(), n > 0 ? n : 1);
  if (workers <= 1 || n < 2) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex guard;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = static_cast<int>(w); i < n; i += static_cast<int>(workers)) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace qsmlab

#ifndef TP_PARALLEL_HPP
#define TP_PARALLEL_HPP

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace tp {

/// Runs body(i) for i in [0, n) across hardware threads. The body must be
/// pure up to disjoint writes; exceptions are captured and rethrown once.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         unsigned max_threads = 0) {
  if (n == 0) return;
  unsigned hw = max_threads ? max_threads : std::thread::hardware_concurrency();
  if (hw <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  unsigned workers = unsigned(std::min<std::size_t>(hw, n));
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        std::scoped_lock lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace tp

#endif

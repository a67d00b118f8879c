#ifndef TWISTDERIV_PARALLEL_HPP
#define TWISTDERIV_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace twistderiv {

// Fixed-size pool of workers for index-space parallel maps. Results are
// stored by index, so any reduction the caller performs afterwards runs in
// a fixed order regardless of the thread count.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned threads = 0)
      : threads_(threads ? threads : std::max(1u, std::thread::hardware_concurrency())) {}

  unsigned threads() const { return threads_; }

  // out[i] = fn(i) for i in [0, count).
  template <class Fn>
  auto map(std::size_t count, Fn&& fn) const {
    using R = decltype(fn(std::size_t{0}));
    std::vector<R> out(count);
    for_each(count, [&](std::size_t i) { out[i] = fn(i); });
    return out;
  }

  template <class Fn>
  void for_each(std::size_t count, Fn&& fn) const {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads_, count));
    if (workers <= 1) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

 private:
  unsigned threads_;
};

}  // namespace twistderiv

#endif  // TWISTDERIV_PARALLEL_HPP

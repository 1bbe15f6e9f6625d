#ifndef WAVEMAP_PARALLEL_HPP
#define WAVEMAP_PARALLEL_HPP

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace wavemap
{

/// Runs fn(0..n-1) across `workers` threads. Exceptions are rethrown on the
/// calling thread (first one wins).
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn)
{
  if (n <= 0) return;
  if (workers <= 1 || n == 1)
  {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;)
    {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try
      {
        fn(i);
      }
      catch (...)
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  const int count = std::min(workers, n);
  threads.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace wavemap

#endif

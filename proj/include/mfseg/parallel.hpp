#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mfseg {

/// Fixed set of workers executing one job at a time. Worker 0 is the calling
/// thread.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return size_; }

  /// Calls fn(worker) once per worker and waits for all of them. The first
  /// exception thrown by any worker is rethrown here.
  void run(const std::function<void(int)>& fn);

 private:
  void loop(int worker);

  int size_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_;
  std::condition_variable done_;
  const std::function<void(int)>* job_ = nullptr;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Contiguous share [begin, end) of `n` items for `worker` out of `workers`.
inline std::pair<std::size_t, std::size_t> split_range(std::size_t n, int worker, int workers) {
  const std::size_t w = static_cast<std::size_t>(workers);
  const std::size_t i = static_cast<std::size_t>(worker);
  return {n * i / w, n * (i + 1) / w};
}

}  // namespace mfseg

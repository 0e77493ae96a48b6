#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lvce {

// Shared worker pool for data-parallel loops. Work is split into one
// contiguous chunk per worker, so every output element is written by exactly
// one thread and per-element accumulation order never depends on the thread
// count; results are bitwise reproducible for any --threads setting.
//
// Calls from inside a worker run inline (no nested parallelism).
class ThreadPool {
 public:
  static ThreadPool& instance();

  /// Number of workers used for subsequent parallel_for calls.
  void set_threads(int n);
  int threads() const { return n_threads_; }

  /// Runs fn(begin, end) over a partition of [0, n). fn must only write to
  /// elements it owns.
  void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

  ~ThreadPool();

 private:
  ThreadPool();
  void worker_loop();
  void ensure_workers();

  int n_threads_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  const std::function<void(std::int64_t, std::int64_t)>* job_ = nullptr;
  std::int64_t job_n_ = 0;
  int job_chunks_ = 0;
  int next_chunk_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

/// Convenience wrapper over the global pool.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

void set_num_threads(int n);
int num_threads();

}  // namespace lvce

#include "lvce/threading.hpp"

#include <algorithm>

namespace lvce {

namespace {
thread_local bool inside_worker = false;
}

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool;
  return pool;
}

ThreadPool::ThreadPool() {
  unsigned hw = std::thread::hardware_concurrency();
  n_threads_ = static_cast<int>(hw == 0 ? 1 : hw);
}

ThreadPool::~ThreadPool() {
  {
    std::unique_lock<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& w : workers_) w.join();
}

void ThreadPool::set_threads(int n) {
  std::unique_lock<std::mutex> lock(mu_);
  n_threads_ = std::max(1, n);
}

void ThreadPool::ensure_workers() {
  // Workers beyond the current setting stay parked; they only cost memory.
  while (static_cast<int>(workers_.size()) < n_threads_ - 1) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

void ThreadPool::worker_loop() {
  inside_worker = true;
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(std::int64_t, std::int64_t)>* job = nullptr;
    std::int64_t n = 0;
    int chunks = 0;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [&] { return stop_ || (job_ != nullptr && generation_ != seen); });
      if (stop_) return;
      seen = generation_;
      job = job_;
      n = job_n_;
      chunks = job_chunks_;
    }
    for (;;) {
      int chunk;
      {
        std::unique_lock<std::mutex> lock(mu_);
        // Jobs are identified by generation, never by the function address:
        // successive jobs from one call site reuse the same stack slot, so a
        // late worker matching on the pointer would run with stale bounds.
        if (generation_ != seen || job_ == nullptr || next_chunk_ >= chunks) break;
        chunk = next_chunk_++;
      }
      const std::int64_t begin = n * chunk / chunks;
      const std::int64_t end = n * (chunk + 1) / chunks;
      if (begin < end) (*job)(begin, end);
      {
        std::unique_lock<std::mutex> lock(mu_);
        if (--pending_ == 0) cv_done_.notify_all();
      }
    }
  }
}

void ThreadPool::parallel_for(std::int64_t n,
                              const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  int nt;
  {
    std::unique_lock<std::mutex> lock(mu_);
    nt = n_threads_;
  }
  if (inside_worker || nt <= 1 || n == 1) {
    fn(0, n);
    return;
  }
  const int chunks = static_cast<int>(std::min<std::int64_t>(n, nt));
  {
    std::unique_lock<std::mutex> lock(mu_);
    ensure_workers();
    job_ = &fn;
    job_n_ = n;
    job_chunks_ = chunks;
    next_chunk_ = 0;
    pending_ = chunks;
    ++generation_;
  }
  cv_work_.notify_all();
  // The caller participates too.
  for (;;) {
    int chunk;
    {
      std::unique_lock<std::mutex> lock(mu_);
      if (next_chunk_ >= chunks) break;
      chunk = next_chunk_++;
    }
    const std::int64_t begin = n * chunk / chunks;
    const std::int64_t end = n * (chunk + 1) / chunks;
    if (begin < end) fn(begin, end);
    {
      std::unique_lock<std::mutex> lock(mu_);
      if (--pending_ == 0) cv_done_.notify_all();
    }
  }
  std::unique_lock<std::mutex> lock(mu_);
  cv_done_.wait(lock, [&] { return pending_ == 0; });
  job_ = nullptr;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  ThreadPool::instance().parallel_for(n, fn);
}

void set_num_threads(int n) { ThreadPool::instance().set_threads(n); }

int num_threads() { return ThreadPool::instance().threads(); }

}  // namespace lvce

#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ysf {

// Persistent worker pool running static range partitions. Work is split into
// one contiguous chunk per worker slot, so reductions that accumulate per
// chunk and combine chunks in index order are bitwise reproducible no matter
// how the OS schedules the threads.
class ThreadPool {
 public:
  using RangeFn = std::function<void(int slot, int64_t begin, int64_t end)>;

  explicit ThreadPool(int workers) : width_(workers < 1 ? 1 : workers) {
    for (int t = 1; t < width_; ++t) {
      threads_.emplace_back([this, t] { worker_loop(t); });
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_start_.notify_all();
    for (auto& th : threads_) th.join();
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int width() const { return width_; }

  // Calls fn(slot, begin, end) on disjoint ranges covering [0, n); slot is a
  // stable index in [0, width). The calling thread executes slot 0.
  void parallel_ranges(int64_t n, const RangeFn& fn) {
    if (n <= 0) return;
    if (width_ == 1) {
      fn(0, 0, n);
      return;
    }
    {
      std::unique_lock<std::mutex> lk(mu_);
      job_ = &fn;
      job_n_ = n;
      pending_ = width_ - 1;
      ++generation_;
    }
    cv_start_.notify_all();
    run_slot(0);
    std::unique_lock<std::mutex> lk(mu_);
    cv_done_.wait(lk, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

  void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    parallel_ranges(n, [&fn](int, int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) fn(i);
    });
  }

 private:
  void run_slot(int slot) {
    const int64_t begin = job_n_ * slot / width_;
    const int64_t end = job_n_ * (slot + 1) / width_;
    if (begin < end) (*job_)(slot, begin, end);
  }

  void worker_loop(int slot) {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_start_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
      }
      run_slot(slot);
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (--pending_ == 0) cv_done_.notify_one();
      }
    }
  }

  int width_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_start_, cv_done_;
  const RangeFn* job_ = nullptr;
  int64_t job_n_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

// Process-wide pool. Width comes from set_workers (the CLI --workers flag),
// the YSF_NUM_WORKERS environment variable, or hardware_concurrency.
ThreadPool& pool();
void set_workers(int workers);
int default_workers();

}  // namespace ysf

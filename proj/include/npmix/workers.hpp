#pragma once

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace npmix {

// Fixed pool of worker threads for data-parallel likelihood evaluation.
//
// Work is always split into contiguous index blocks whose sizes differ by at
// most one element (the first total % size() blocks receive one extra). Each
// block writes to its own output slots, so the assembled result is identical
// for every pool size, bit for bit. A pool of size 1 runs on the caller's
// thread with no synchronization.
class WorkerPool {
 public:
  using BlockFn = std::function<void(int worker, std::int64_t begin, std::int64_t end)>;

  explicit WorkerPool(int workers) : size_(workers < 1 ? 1 : workers) {
    for (int w = 1; w < size_; ++w) {
      threads_.emplace_back([this, w] { worker_loop(w); });
    }
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      shutdown_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return size_; }

  // Runs fn over [0, total) split into size() contiguous blocks; blocks.
  // Worker 0 is the calling thread. The first exception thrown by any block
  // is rethrown here after all workers finish.
  void run_blocks(std::int64_t total, const BlockFn& fn) {
    if (size_ == 1) {
      fn(0, 0, total);
      return;
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      fn_ = &fn;
      total_ = total;
      pending_ = size_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    run_block_checked(0);
    {
      std::unique_lock<std::mutex> lock(mutex_);
      done_cv_.wait(lock, [this] { return pending_ == 0; });
      fn_ = nullptr;
      if (error_) std::rethrow_exception(error_);
    }
  }

 private:
  void block_range(int worker, std::int64_t* begin, std::int64_t* end) const {
    const std::int64_t q = total_ / size_;
    const std::int64_t r = total_ % size_;
    *begin = worker * q + (worker < r ? worker : r);
    *end = *begin + q + (worker < r ? 1 : 0);
  }

  void run_block_checked(int worker) {
    std::int64_t begin, end;
    block_range(worker, &begin, &end);
    if (begin >= end) return;
    try {
      (*fn_)(worker, begin, end);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void worker_loop(int worker) {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return shutdown_ || generation_ != seen; });
        if (shutdown_) return;
        seen = generation_;
      }
      run_block_checked(worker);
      {
        std::lock_guard<std::mutex> lock(mutex_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  const int size_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const BlockFn* fn_ = nullptr;
  std::int64_t total_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  std::exception_ptr error_;
  bool shutdown_ = false;
};

}  // namespace npmix

// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <stop_token>
#include <thread>
#include <vector>

namespace cnnd {

/// Fork/join worker pool.
///
/// parallel_for() hands out item indices from a shared counter; the calling
/// thread participates, so a pool with zero workers degenerates to a plain
/// loop and nested or concurrent calls cannot deadlock. Items must write
/// disjoint outputs.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t workers) {
    workers_.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) {
      workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    for (auto& w : workers_) w.request_stop();
    cv_.notify_all();
  }

  /// Threads that execute items, counting the caller.
  std::size_t concurrency() const noexcept { return workers_.size() + 1; }

  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (workers_.empty() || count == 1) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }

    auto job = std::make_shared<Job>();
    job->count = count;
    job->fn = &fn;

    const std::size_t helpers = std::min(workers_.size(), count - 1);
    {
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < helpers; ++i) {
        queue_.emplace_back([job] { job->drain(); });
      }
    }
    cv_.notify_all();

    job->drain();
    {
      std::unique_lock lock(job->mu);
      job->done_cv.wait(lock, [&] { return job->done == job->count; });
    }
    if (job->error) std::rethrow_exception(job->error);
  }

 private:
  struct Job {
    std::size_t count = 0;
    const std::function<void(std::size_t)>* fn = nullptr;
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::condition_variable done_cv;
    std::size_t done = 0;
    std::exception_ptr error;

    void drain() {
      for (;;) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= count) return;
        std::exception_ptr failure;
        try {
          (*fn)(i);
        } catch (...) {
          failure = std::current_exception();
        }
        std::lock_guard lock(mu);
        if (failure && !error) error = failure;
        if (++done == count) done_cv.notify_all();
      }
    }
  };

  void worker_loop(std::stop_token st) {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock lock(mu_);
        if (!cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      task();
    }
  }

  std::mutex mu_;
  std::condition_variable_any cv_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::jthread> workers_;
};

/// Process-wide pool sized to the host: hardware threads minus the caller.
inline ThreadPool& default_pool() {
  static ThreadPool pool([] {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 1 ? static_cast<std::size_t>(hw - 1) : std::size_t{0};
  }());
  return pool;
}

}  // namespace cnnd

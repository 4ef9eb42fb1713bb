#include "dspk/thread_pool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace dspk {
namespace {

struct Job {
  const std::function<void(int64_t)>* fn = nullptr;
  std::atomic<int64_t> next{0};
  int64_t total = 0;
  std::atomic<int64_t> pending{0};
};

class Pool {
 public:
  Pool() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DSPK_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) n = v;
    }
    if (n < 1) n = 1;
    nthreads_ = n;
    for (int i = 0; i + 1 < n; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int nthreads() const { return nthreads_; }

  void run(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    if (n == 1 || nthreads_ == 1) {
      for (int64_t i = 0; i < n; ++i) fn(i);
      return;
    }
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->total = n;
    job->pending.store(n);
    {
      std::lock_guard<std::mutex> lk(mu_);
      job_ = job;
      ++epoch_;
    }
    cv_.notify_all();

    drain(*job);

    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [&] { return job->pending.load() == 0; });
    job_.reset();
  }

 private:
  static void drain_tasks(Job& job) {
    for (;;) {
      int64_t i = job.next.fetch_add(1);
      if (i >= job.total) return;
      (*job.fn)(i);
      job.pending.fetch_sub(1);
    }
  }

  void drain(Job& job) {
    drain_tasks(job);
    // wake the submitter if workers already finished
    if (job.pending.load() == 0) done_cv_.notify_all();
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || (epoch_ != seen && job_); });
        if (stop_) return;
        seen = epoch_;
        job = job_;
      }
      drain_tasks(*job);
      if (job->pending.load() == 0) {
        std::lock_guard<std::mutex> lk(mu_);
        done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::shared_ptr<Job> job_;
  uint64_t epoch_ = 0;
  bool stop_ = false;
  int nthreads_ = 1;
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int thread_count() { return pool().nthreads(); }

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  pool().run(n, fn);
}

}  // namespace dspk

#include "g2flow/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace g2flow::par {
namespace {

thread_local bool t_in_region = false;

int auto_threads() {
  if (const char* env = std::getenv("G2FLOW_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

struct Job {
  const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
  std::size_t n = 0;
  std::size_t chunk = 1;
  std::size_t nchunks = 0;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;

  void run_chunks() {
    for (;;) {
      const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= nchunks) return;
      const std::size_t b = c * chunk;
      const std::size_t e = b + chunk < n ? b + chunk : n;
      try {
        (*fn)(b, e);
      } catch (...) {
        {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
        next.store(nchunks, std::memory_order_relaxed);  // drain fast
      }
    }
  }
};

class Pool {
 public:
  explicit Pool(int workers) {
    threads_.reserve(workers);
    for (int i = 0; i < workers; ++i)
      threads_.emplace_back([this] { worker_loop(); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      shutdown_ = true;
      ++generation_;
    }
    cv_work_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(Job& job) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      job_ = &job;
      active_ = threads_.size();
      ++generation_;
    }
    cv_work_.notify_all();
    t_in_region = true;
    job.run_chunks();
    t_in_region = false;
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [this] { return active_ == 0; });
    job_ = nullptr;
  }

 private:
  void worker_loop() {
    t_in_region = true;
    std::uint64_t seen = 0;
    for (;;) {
      Job* job = nullptr;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_work_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (shutdown_) return;
        job = job_;
      }
      if (job) job->run_chunks();
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (--active_ == 0) cv_done_.notify_all();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_work_, cv_done_;
  std::uint64_t generation_ = 0;
  std::size_t active_ = 0;
  Job* job_ = nullptr;
  bool shutdown_ = false;
};

int g_threads = 0;       // resolved count; 0 = not yet resolved
Pool* g_pool = nullptr;  // created on demand when g_threads > 1

int resolved_threads() {
  if (g_threads == 0) g_threads = auto_threads();
  return g_threads;
}

}  // namespace

void set_threads(int n) {
  delete g_pool;
  g_pool = nullptr;
  g_threads = n > 0 ? n : auto_threads();
}

int threads() { return resolved_threads(); }

void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (grain == 0) grain = 1;
  const int nt = resolved_threads();
  if (nt <= 1 || t_in_region || n <= grain) {
    fn(0, n);
    return;
  }
  if (!g_pool) g_pool = new Pool(nt - 1);

  Job job;
  job.fn = &fn;
  job.n = n;
  job.chunk = grain;
  job.nchunks = (n + grain - 1) / grain;
  g_pool->run(job);
  if (job.error) std::rethrow_exception(job.error);
}

}  // namespace g2flow::par

#include "fmseg/common.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <thread>
#include <vector>

namespace fmseg {

namespace {

unsigned g_thread_cap = 0;  // 0 = hardware

// one chunk per worker; a thread that is already inside a parallel section
// runs nested sections serially
thread_local bool t_in_parallel = false;

class Pool {
 public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
           std::size_t want_workers) {
    const std::size_t nw = std::min({want_workers, n, workers_.size() + 1});
    if (nw <= 1 || t_in_parallel) {
      fn(0, n);
      return;
    }
    const std::size_t chunk = (n + nw - 1) / nw;
    {
      std::lock_guard<std::mutex> lk(mutex_);
      fn_ = &fn;
      n_ = n;
      chunk_ = chunk;
      error_ = nullptr;
      remaining_.store(workers_.size(), std::memory_order_relaxed);
      ++epoch_;
    }
    cv_.notify_all();
    t_in_parallel = true;
    try {
      fn(0, std::min(n, chunk));
    } catch (...) {
      record_error(std::current_exception());
    }
    t_in_parallel = false;
    std::unique_lock<std::mutex> lk(mutex_);
    done_cv_.wait(lk, [this] { return remaining_.load(std::memory_order_acquire) == 0; });
    if (error_) {
      std::exception_ptr e = error_;
      error_ = nullptr;
      lk.unlock();
      std::rethrow_exception(e);
    }
  }

 private:
  Pool() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    for (unsigned i = 1; i < hw; ++i) workers_.emplace_back([this, i] { loop(i); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void loop(unsigned id) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t, std::size_t)>* task;
      std::size_t n, chunk;
      {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
        if (stop_) return;
        seen = epoch_;
        task = fn_;
        n = n_;
        chunk = chunk_;
      }
      const std::size_t lo = static_cast<std::size_t>(id) * chunk;
      if (lo < n) {
        t_in_parallel = true;
        try {
          (*task)(lo, std::min(n, lo + chunk));
        } catch (...) {
          record_error(std::current_exception());
        }
        t_in_parallel = false;
      }
      if (remaining_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lk(mutex_);
        done_cv_.notify_all();
      }
    }
  }

  void record_error(std::exception_ptr e) {
    std::lock_guard<std::mutex> lk(mutex_);
    if (!error_) error_ = e;
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
  std::size_t n_ = 0;
  std::size_t chunk_ = 0;
  std::uint64_t epoch_ = 0;
  std::atomic<std::size_t> remaining_{0};
  std::exception_ptr error_ = nullptr;
  bool stop_ = false;
};

}  // namespace

void set_thread_count(unsigned n) { g_thread_cap = n; }

unsigned thread_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return g_thread_cap == 0 ? hw : std::min(g_thread_cap, hw);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& range_fn) {
  if (n == 0) return;
  Pool::instance().run(n, range_fn, thread_count());
}

void parallel_for_each(std::size_t n, const std::function<void(std::size_t)>& fn) {
  parallel_for(n, [&fn](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) fn(i);
  });
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t h) { return fnv1a64(s.data(), s.size(), h); }

std::string format_double(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace fmseg

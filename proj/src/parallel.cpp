#include "r2o/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace r2o {

namespace {

int g_threads = std::max(1, std::min(4, static_cast<int>(std::thread::hardware_concurrency())));

// Persistent worker pool; parallel_chunks runs per conv layer per batch,
// so respawning threads each call would dominate the small kernels.
// run() mutates task state only while every worker is parked on the
// condition variable, which rules out stale workers reading a
// half-updated task.
class Pool {
public:
    ~Pool() { stop(); }

    void run(int helpers, std::size_t n_chunks, const std::function<void(std::size_t)>& chunk_fn) {
        {
            std::unique_lock<std::mutex> lock(mu_);
            while (static_cast<int>(threads_.size()) < helpers) {
                threads_.emplace_back([this] { worker_main(); });
                ++parked_target_;
            }
            cv_parked_.wait(lock, [&] { return parked_ == parked_target_; });
            chunk_fn_ = &chunk_fn;
            total_ = n_chunks;
            next_.store(0, std::memory_order_relaxed);
            busy_ = 0;
            ++generation_;
        }
        cv_work_.notify_all();
        drain();
        std::unique_lock<std::mutex> lock(mu_);
        cv_done_.wait(lock, [&] { return next_.load(std::memory_order_relaxed) >= total_ && busy_ == 0; });
        chunk_fn_ = nullptr;
        total_ = 0;
    }

private:
    // Executes chunks until none remain. Caller threads and workers share it.
    void drain() {
        for (;;) {
            const std::size_t c = next_.fetch_add(1, std::memory_order_relaxed);
            if (c >= total_) break;
            (*chunk_fn_)(c);
        }
    }

    void worker_main() {
        std::uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lock(mu_);
            ++parked_;
            cv_parked_.notify_all();
            cv_work_.wait(lock, [&] { return stopping_ || generation_ != seen; });
            --parked_;
            if (stopping_) return;
            seen = generation_;
            ++busy_;
            lock.unlock();
            drain();
            lock.lock();
            --busy_;
            if (busy_ == 0) cv_done_.notify_all();
        }
    }

    void stop() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stopping_ = true;
        }
        cv_work_.notify_all();
        for (auto& t : threads_) t.join();
        threads_.clear();
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_work_, cv_done_, cv_parked_;
    const std::function<void(std::size_t)>* chunk_fn_ = nullptr;
    std::atomic<std::size_t> next_{0};
    std::size_t total_ = 0;
    int busy_ = 0;
    int parked_ = 0;
    int parked_target_ = 0;
    std::uint64_t generation_ = 0;
    bool stopping_ = false;
};

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

int set_threads(int n) {
    if (n > 0) g_threads = n;
    return g_threads;
}

int threads() { return g_threads; }

void parallel_chunks(std::size_t n_items, std::size_t n_chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n_items == 0) return;
    n_chunks = std::min(n_chunks, n_items);
    if (n_chunks == 0) n_chunks = 1;

    auto chunk_range = [&](std::size_t c) {
        const std::size_t base = n_items / n_chunks, rem = n_items % n_chunks;
        const std::size_t begin = c * base + std::min(c, rem);
        const std::size_t end = begin + base + (c < rem ? 1 : 0);
        return std::pair<std::size_t, std::size_t>{begin, end};
    };

    const int workers = static_cast<int>(std::min<std::size_t>(g_threads, n_chunks));
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            auto [b, e] = chunk_range(c);
            fn(c, b, e);
        }
        return;
    }

    const std::function<void(std::size_t)> chunk_fn = [&](std::size_t c) {
        auto [b, e] = chunk_range(c);
        fn(c, b, e);
    };
    pool().run(workers - 1, n_chunks, chunk_fn);
}

}  // namespace r2o

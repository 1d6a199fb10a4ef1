// parallel.hpp - persistent worker pool for row-parallel stencil sweeps

#pragma once

#include <algorithm>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace enzgrid {

/// Splits [0, n) into `workers` contiguous chunks and runs them
/// concurrently; `run` returns once every chunk is done (one barrier per
/// call). Chunk boundaries depend only on n and the worker count.
class WorkerPool {
public:
    explicit WorkerPool(int workers) : workers_(std::max(1, workers)) {
        for (int w = 1; w < workers_; ++w) threads_.emplace_back([this, w] { loop(w); });
    }

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        wake_.notify_all();
        for (auto& t : threads_) t.join();
    }

    int workers() const { return workers_; }

    template <typename F>
    void run(int n, F&& body) {
        if (workers_ == 1 || n < 2 * workers_) {
            body(0, n);
            return;
        }
        {
            std::lock_guard lock(mutex_);
            task_ = std::ref(body);
            n_ = n;
            pending_ = workers_ - 1;
            ++generation_;
        }
        wake_.notify_all();
        const auto [b, e] = chunk(0, n);
        body(b, e);
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return pending_ == 0; });
        task_ = nullptr;
    }

private:
    std::pair<int, int> chunk(int w, int n) const {
        const int base = n / workers_, extra = n % workers_;
        const int b = w * base + std::min(w, extra);
        return {b, b + base + (w < extra ? 1 : 0)};
    }

    void loop(int w) {
        long seen = 0;
        while (true) {
            std::function<void(int, int)> task;
            int n = 0;
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                task = task_;
                n = n_;
            }
            const auto [b, e] = chunk(w, n);
            task(b, e);
            {
                std::lock_guard lock(mutex_);
                if (--pending_ == 0) done_.notify_one();
            }
        }
    }

    int workers_;
    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable wake_, done_;
    std::function<void(int, int)> task_;
    int n_ = 0;
    int pending_ = 0;
    long generation_ = 0;
    bool stop_ = false;
};

}  // namespace enzgrid

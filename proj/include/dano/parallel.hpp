#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "dano/error.hpp"

namespace dano {

/// Fixed set of worker threads. run(count, f) calls f(i, worker) for every
/// i < count, where worker w always takes the indices i with i % size() == w.
/// The assignment depends only on the pool size, and callers that write one
/// slot per index get results independent of scheduling.
class WorkerPool {
public:
    explicit WorkerPool(int threads) : size_(threads < 1 ? 1 : threads) {
        for (int w = 1; w < size_; ++w) threads_.emplace_back([this, w](std::stop_token st) { loop(st, w); });
    }

    ~WorkerPool() {
        {
            std::lock_guard lock(mu_);
            for (auto &t : threads_) t.request_stop();
        }
        wake_.notify_all();
    }

    WorkerPool(const WorkerPool &) = delete;
    WorkerPool &operator=(const WorkerPool &) = delete;

    int size() const { return size_; }

    void run(std::size_t count, const std::function<void(std::size_t, int)> &f) {
        if (size_ == 1) {
            for (std::size_t i = 0; i < count; ++i) f(i, 0);
            return;
        }
        {
            std::lock_guard lock(mu_);
            job_ = &f;
            count_ = count;
            pending_ = size_ - 1;
            errors_.assign(static_cast<std::size_t>(size_), nullptr);
            ++generation_;
        }
        wake_.notify_all();
        work(0);
        std::unique_lock lock(mu_);
        done_.wait(lock, [&] { return pending_ == 0; });
        job_ = nullptr;
        for (auto &e : errors_)
            if (e) std::rethrow_exception(e);
    }

private:
    void work(int w) {
        try {
            for (std::size_t i = static_cast<std::size_t>(w); i < count_; i += static_cast<std::size_t>(size_)) (*job_)(i, w);
        } catch (...) {
            errors_[static_cast<std::size_t>(w)] = std::current_exception();
        }
    }

    void loop(std::stop_token st, int w) {
        std::size_t seen = 0;
        while (true) {
            {
                std::unique_lock lock(mu_);
                wake_.wait(lock, [&] { return st.stop_requested() || generation_ != seen; });
                if (st.stop_requested()) return;
                seen = generation_;
            }
            work(w);
            {
                std::lock_guard lock(mu_);
                --pending_;
            }
            done_.notify_one();
        }
    }

    int size_;
    std::mutex mu_;
    std::condition_variable wake_, done_;
    const std::function<void(std::size_t, int)> *job_ = nullptr;
    std::size_t count_ = 0;
    std::size_t generation_ = 0;
    int pending_ = 0;
    std::vector<std::exception_ptr> errors_;
    std::vector<std::jthread> threads_;
};

} // namespace dano

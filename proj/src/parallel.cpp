#include "paon/common.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace paon {

namespace {

// Fork-join pool. Workers sit on a condition variable between jobs; the
// caller thread takes the first chunk itself.
class Pool {
public:
    explicit Pool(int workers) : job_body_(nullptr) {
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            shutdown_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    int size() const { return static_cast<int>(threads_.size()); }

    void run(std::int64_t count,
             const std::function<void(std::int64_t, std::int64_t)>& body) {
        const int parts = size() + 1;
        const std::int64_t chunk = (count + parts - 1) / parts;
        {
            std::unique_lock<std::mutex> lk(mu_);
            job_body_ = &body;
            job_count_ = count;
            job_chunk_ = chunk;
            next_part_ = 1;  // part 0 runs on the calling thread
            pending_ = size();
            ++generation_;
        }
        cv_.notify_all();

        body(0, std::min<std::int64_t>(chunk, count));

        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        job_body_ = nullptr;
    }

private:
    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::int64_t, std::int64_t)>* body;
            std::int64_t count, chunk;
            int part;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return shutdown_ || generation_ != seen; });
                if (shutdown_) return;
                seen = generation_;
                body = job_body_;
                count = job_count_;
                chunk = job_chunk_;
                part = next_part_++;
            }
            const std::int64_t lo = std::min<std::int64_t>(part * chunk, count);
            const std::int64_t hi = std::min<std::int64_t>(lo + chunk, count);
            if (lo < hi) (*body)(lo, hi);
            {
                std::unique_lock<std::mutex> lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* job_body_;
    std::int64_t job_count_ = 0;
    std::int64_t job_chunk_ = 0;
    int next_part_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool shutdown_ = false;
};

int& configured_workers() {
    static int n = -1;  // -1: derive from hardware
    return n;
}

Pool& pool() {
    static Pool p([] {
        int n = configured_workers();
        if (n < 0) n = static_cast<int>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
        return n - 1;  // caller thread counts as one worker
    }());
    return p;
}

}  // namespace

int worker_count() { return pool().size() + 1; }

void set_worker_count(int n) {
    // Only effective before the pool is first used.
    configured_workers() = n < 1 ? 1 : n;
}

void parallel_for(std::int64_t count,
                  const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (count <= 0) return;
    if (count == 1 || pool().size() == 0) {
        body(0, count);
        return;
    }
    pool().run(count, body);
}

}  // namespace paon

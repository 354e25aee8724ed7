#include "tabcsdi/threading.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace tabcsdi {

namespace {

int default_threads() {
    if (const char* env = std::getenv("TABCSDI_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

thread_local bool tl_in_worker = false;

struct InWorkerGuard {
    bool prev;
    InWorkerGuard() : prev(tl_in_worker) { tl_in_worker = true; }
    ~InWorkerGuard() { tl_in_worker = prev; }
};

// Persistent fork-join pool. Spawning threads per matmul call would dominate
// the small GEMMs in the denoiser, so workers stay parked on a condition
// variable between jobs. Part claims are tagged with the job id under the job
// mutex, so a straggler from a finished job can never touch the next one.
// Calls from inside a worker run inline, which makes nesting safe.
class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void set_threads(int n) {
        std::lock_guard<std::mutex> lk(api_mutex_);
        if (n < 1) n = 1;
        shutdown_workers();
        threads_.store(n, std::memory_order_relaxed);
        start_workers();
    }

    int threads() const { return threads_.load(std::memory_order_relaxed); }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        if (n <= 0) return;
        if (tl_in_worker) {
            fn(0, n);
            return;
        }
        int workers = threads_.load(std::memory_order_relaxed);
        if (n == 1 && workers > 1) {
            // single chunk: run here; nested sections may still use the pool
            fn(0, n);
            return;
        }
        if (workers <= 1) {
            // no pool: run inline and keep nested sections inline too
            InWorkerGuard guard;
            fn(0, n);
            return;
        }
        std::lock_guard<std::mutex> lk(api_mutex_);
        int64_t parts = std::min<int64_t>(workers, n);
        uint64_t my_job;
        {
            std::lock_guard<std::mutex> jl(job_mutex_);
            job_fn_ = &fn;
            job_n_ = n;
            job_chunk_ = (n + parts - 1) / parts;
            next_part_ = 0;
            parts_total_ = parts;
            parts_done_ = 0;
            my_job = ++job_id_;
        }
        job_cv_.notify_all();
        std::exception_ptr error;
        {
            InWorkerGuard guard;
            try {
                work_on_job(my_job);
            } catch (...) {
                error = std::current_exception();
            }
        }
        // even on error, wait for the workers so fn stays alive for them
        std::unique_lock<std::mutex> jl(job_mutex_);
        done_cv_.wait(jl, [&] { return parts_done_ == parts_total_; });
        job_fn_ = nullptr;
        if (error) std::rethrow_exception(error);
    }

private:
    Pool() {
        threads_.store(default_threads(), std::memory_order_relaxed);
        start_workers();
    }

    ~Pool() { shutdown_workers(); }

    void start_workers() {
        stop_ = false;
        int n = threads_.load(std::memory_order_relaxed);
        for (int i = 1; i < n; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void shutdown_workers() {
        {
            std::lock_guard<std::mutex> jl(job_mutex_);
            stop_ = true;
        }
        job_cv_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
    }

    void worker_loop() {
        tl_in_worker = true;
        uint64_t seen_job = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> jl(job_mutex_);
                job_cv_.wait(jl, [&] { return stop_ || job_id_ != seen_job; });
                if (stop_) return;
                seen_job = job_id_;
            }
            work_on_job(seen_job);
        }
    }

    void work_on_job(uint64_t job) {
        for (;;) {
            const std::function<void(int64_t, int64_t)>* fn;
            int64_t begin, end;
            {
                std::lock_guard<std::mutex> jl(job_mutex_);
                if (job_id_ != job || !job_fn_ || next_part_ >= parts_total_) return;
                int64_t part = next_part_++;
                begin = part * job_chunk_;
                end = std::min(job_n_, begin + job_chunk_);
                fn = job_fn_;
            }
            auto count_done = [&] {
                std::lock_guard<std::mutex> jl(job_mutex_);
                if (job_id_ == job && ++parts_done_ == parts_total_) done_cv_.notify_all();
            };
            if (begin < end) {
                try {
                    (*fn)(begin, end);
                } catch (...) {
                    count_done(); // keep the accounting intact for the waiters
                    throw;
                }
            }
            count_done();
        }
    }

    std::mutex api_mutex_;
    std::mutex job_mutex_;
    std::condition_variable job_cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> workers_;
    std::atomic<int> threads_{1};
    bool stop_ = false;
    uint64_t job_id_ = 0;
    const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
    int64_t job_n_ = 0;
    int64_t job_chunk_ = 0;
    int64_t parts_total_ = 0;
    int64_t next_part_ = 0;
    int64_t parts_done_ = 0;
};

} // namespace

void set_num_threads(int n) { Pool::instance().set_threads(n); }

int num_threads() { return Pool::instance().threads(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    Pool::instance().run(n, fn);
}

} // namespace tabcsdi

#include "counterlens/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace counterlens {

namespace {

std::atomic<unsigned> g_workers{std::max(1u, std::thread::hardware_concurrency())};
thread_local bool t_inside_region = false;

} // namespace

unsigned worker_count() { return g_workers.load(); }

void set_worker_count(unsigned workers) { g_workers.store(std::max(1u, workers)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0)
        return;
    const std::size_t threads = std::min<std::size_t>(worker_count(), n);
    if (threads <= 1 || t_inside_region) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::size_t error_index = n;
    std::exception_ptr error;

    auto worker = [&] {
        t_inside_region = true;
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
        t_inside_region = false;
    };

    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

} // namespace counterlens

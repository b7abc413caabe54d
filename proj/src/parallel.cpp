#include "rhbsde/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rhbsde {

namespace {
std::atomic<int> g_threads{0};

int resolve_threads() {
    int n = g_threads.load();
    if (n > 0) return n;
    if (const char* env = std::getenv("RHBSDE_THREADS")) {
        const int from_env = std::atoi(env);
        if (from_env > 0) return from_env;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}
}  // namespace

void set_thread_count(int n) { g_threads.store(n); }
int thread_count() { return resolve_threads(); }

void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t n_blocks = (n + kBlockSize - 1) / kBlockSize;
    const int workers = std::min<std::size_t>(resolve_threads(), n_blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) {
            fn(b * kBlockSize, std::min(n, (b + 1) * kBlockSize));
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            try {
                while (true) {
                    const std::size_t b = next.fetch_add(1);
                    if (b >= n_blocks) break;
                    fn(b * kBlockSize, std::min(n, (b + 1) * kBlockSize));
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n_blocks);  // drain remaining blocks
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rhbsde

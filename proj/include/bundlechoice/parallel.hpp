#ifndef BUNDLECHOICE_PARALLEL_HPP
#define BUNDLECHOICE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace bundlechoice {

/// Worker count: `requested` if positive, else hardware concurrency; always
/// capped by the BUNDLECHOICE_THREADS environment variable when set.
inline int resolve_threads(int requested = 0) {
    int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("BUNDLECHOICE_THREADS"); env != nullptr && *env != '\0') {
        try {
            const int cap = std::stoi(env);
            if (cap > 0) n = std::min(n, cap);
        } catch (const std::exception&) {
            // ignore malformed values
        }
    }
    return std::max(1, n);
}

/// Splits [0, n) into fixed chunks of `chunk` items. Chunk boundaries never
/// depend on the thread count, so per-chunk partial results reduced in chunk
/// order give identical sums for any number of workers.
struct ChunkPlan {
    std::size_t items = 0;
    std::size_t chunk = 1;

    [[nodiscard]] std::size_t count() const noexcept { return chunk == 0 ? 0 : (items + chunk - 1) / chunk; }
    [[nodiscard]] std::size_t begin(std::size_t c) const noexcept { return c * chunk; }
    [[nodiscard]] std::size_t end(std::size_t c) const noexcept { return std::min(items, (c + 1) * chunk); }
};

/// Calls fn(c) for every chunk index c in [0, chunks) on up to `threads`
/// workers. The first exception (lowest chunk index) is rethrown.
template <class F>
void parallel_for(std::size_t chunks, int threads, F&& fn) {
    if (chunks == 0) return;
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex guard;
    std::exception_ptr error;
    std::size_t error_chunk = chunks;
    auto work = [&] {
        for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
            try {
                fn(c);
            } catch (...) {
                std::lock_guard lock(guard);
                if (c < error_chunk) {
                    error_chunk = c;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(workers, chunks);
    pool.reserve(n - 1);
    for (std::size_t k = 1; k < n; ++k) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_PARALLEL_HPP

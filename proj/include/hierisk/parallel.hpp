#pragma once

// parallel_for over fixed-size blocks. Blocks write disjoint output and there
// are no parallel reductions anywhere in the library, so results are bitwise
// identical for every thread count. Reductions happen serially, in index order.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace hierisk {

namespace detail {
inline std::atomic<unsigned>& thread_count_slot() {
    static std::atomic<unsigned> n{0};  // 0: resolve to hardware_concurrency
    return n;
}
}  // namespace detail

inline void set_thread_count(unsigned n) { detail::thread_count_slot().store(n); }

inline unsigned thread_count() {
    unsigned n = detail::thread_count_slot().load();
    if (n == 0) n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t block = 8192) {
    if (n == 0) return;
    const std::size_t nblocks = (n + block - 1) / block;
    const std::size_t workers = std::min<std::size_t>(thread_count(), nblocks);
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr err;
    std::atomic_flag err_claim = ATOMIC_FLAG_INIT;
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            const std::size_t lo = b * block;
            if (lo >= n || failed.load(std::memory_order_relaxed)) return;
            try {
                fn(lo, std::min(n, lo + block));
            } catch (...) {
                if (!err_claim.test_and_set()) err = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace hierisk

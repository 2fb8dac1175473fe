#pragma once
// Deterministic replica scheduling: run f(0..reps-1), each replica seeded
// from its index, and collect results in index order.  Output is identical
// for any worker count because workers only decide *when* a replica runs,
// never what it computes or where its result lands.

#include <atomic>
#include <stdexcept>
#include <thread>
#include <vector>

namespace pam {

template <class F>
auto parallel_map(long reps, int workers, F&& f) {
    using R = decltype(f(0L));
    if (reps < 0) throw std::invalid_argument("parallel_map: reps must be >= 0");
    std::vector<R> out(static_cast<std::size_t>(reps));
    if (workers <= 1) {
        for (long i = 0; i < reps; ++i) out[static_cast<std::size_t>(i)] = f(i);
        return out;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    int nw = std::min<long>(workers, reps > 0 ? reps : 1);
    pool.reserve(static_cast<std::size_t>(nw));
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    for (int w = 0; w < nw; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                long i = next.fetch_add(1);
                if (i >= reps || failed.load()) return;
                try {
                    out[static_cast<std::size_t>(i)] = f(i);
                } catch (...) {
                    if (!failed.exchange(true)) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(err);
    return out;
}

inline int default_workers() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

} // namespace pam

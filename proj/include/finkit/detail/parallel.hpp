#ifndef FINKIT_DETAIL_PARALLEL_HPP
#define FINKIT_DETAIL_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace finkit::detail {

/// Runs fn(begin, end) over contiguous slices of [0, n). Slices are disjoint,
/// so any per-index output written by fn is independent of the thread count.
template<class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        fn(std::size_t{0}, n);
        return;
    }
    const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads, n));
    const std::size_t chunk = (n + workers - 1) / workers;

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) {
            break;
        }
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace finkit::detail

#endif

#ifndef BIOTUNE_PARALLEL_HPP
#define BIOTUNE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace biotune {

    /// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions must
    /// be handled inside fn.
    template <typename Fn>
    void parallel_for(std::size_t n, std::size_t workers, Fn&& fn)
    {
        workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
        if (workers == 1) {
            for (std::size_t i = 0; i < n; ++i)
                fn(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++)
                    fn(i);
            });
    }

} // namespace biotune

#endif

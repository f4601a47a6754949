#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ri {

/// Worker count: hardware concurrency, capped by RI_THREADS when set.
inline unsigned defaultThreads()
{
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (char const* env = std::getenv("RI_THREADS"))
    {
        try
        {
            long const cap = std::stol(env);
            if (cap >= 1)
                n = std::min(n, static_cast<unsigned>(cap));
        }
        catch (std::exception const&)
        {
        }
    }
    return n;
}

/*!
 * Run f(i) for i in [0, n) on up to \p threads workers.
 *
 * Indices are handed out dynamically; callers write results into slot i so
 * the outcome does not depend on scheduling. The first exception thrown by
 * any task is rethrown after all workers stop.
 */
template<class F>
void parallelFor(std::size_t n, unsigned threads, F&& f)
{
    threads = static_cast<unsigned>(
        std::min<std::size_t>(std::max(1u, threads), n));
    if (threads <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;)
        {
            std::size_t const i = next.fetch_add(1);
            if (i >= n || failed.load())
                return;
            try
            {
                f(i);
            }
            catch (...)
            {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

}  // namespace ri

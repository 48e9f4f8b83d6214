#ifndef RMLHMM_PARALLEL_HPP_INCLUDED
#define RMLHMM_PARALLEL_HPP_INCLUDED

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace rmlhmm
{
/// Worker cap: RML_HMM_THREADS if set to a positive integer, else hardware concurrency.
inline std::size_t worker_count()
{
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RML_HMM_THREADS"))
    {
        try
        {
            long v = std::stol(env);
            if (v > 0)
                return static_cast<std::size_t>(v);
        }
        catch (const std::exception&)
        {
        }
    }
    return hw;
}

/// out[i] = fn(i) for i < n, evaluated on up to worker_count() threads.
/// Results are stored by index, so the output never depends on scheduling.
/// The first exception thrown by any task is rethrown after all workers join.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn)
{
    std::vector<T> out(n);
    std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = fn(i);
        return out;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (std::size_t i = next++; i < n && !failed; i = next++)
        {
            try
            {
                out[i] = fn(i);
            }
            catch (...)
            {
                if (!failed.exchange(true))
                    error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
    return out;
}

} // namespace rmlhmm

#endif // RMLHMM_PARALLEL_HPP_INCLUDED

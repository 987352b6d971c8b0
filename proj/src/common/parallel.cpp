#include "dinoprobe/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dinoprobe {

std::size_t default_jobs()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn)
{
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> workers;
        workers.reserve(jobs);
        for (std::size_t w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                while (!stop) {
                    const std::size_t i = next++;
                    if (i >= n)
                        return;
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error)
                            error = std::current_exception();
                        stop = true;
                    }
                }
            });
    }
    if (error)
        std::rethrow_exception(error);
}

} // namespace dinoprobe

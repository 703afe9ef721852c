// parallel.hpp - index-ordered parallel loop for independent grid points

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace rabi {

/// Worker count: the explicit request, or hardware concurrency when it is 0.
/// RABI_LAB_THREADS caps the result when set to a positive value.
inline unsigned resolve_threads(unsigned requested) {
    unsigned n = requested != 0 ? requested : std::thread::hardware_concurrency();
    if (const char* env = std::getenv("RABI_LAB_THREADS")) {
        try {
            const auto cap = static_cast<unsigned>(std::stoul(env));
            if (cap != 0) n = std::min(n == 0 ? cap : n, cap);
        } catch (const std::exception&) {
        }
    }
    return n == 0 ? 1 : n;
}

/// Calls fn(i) for i in [0, count). Each index writes only its own output
/// slot, so results do not depend on scheduling. The exception from the
/// lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), count));
    std::vector<std::exception_ptr> errors(count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace rabi

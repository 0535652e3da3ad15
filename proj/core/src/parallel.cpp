// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace sketchcp {
namespace {

int initial_workers() {
    if (const char* env = std::getenv("SKETCHCP_WORKERS")) {
        try {
            int w = std::stoi(env);
            if (w >= 1) return w;
        } catch (...) {
        }
    }
    return 1;
}

std::atomic<int>& workers_setting() {
    static std::atomic<int> value{initial_workers()};
    return value;
}

}  // namespace

int worker_count() { return workers_setting().load(); }

void set_worker_count(int workers) { workers_setting().store(std::max(1, workers)); }

void parallel_for(std::size_t tasks, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), tasks);
    if (workers <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) body(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                try {
                    for (std::size_t t = next++; t < tasks; t = next++) body(t);
                } catch (...) {
                    std::lock_guard guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                    next = tasks;
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

std::vector<std::size_t> balanced_boundaries(std::span<const std::size_t> prefix, std::size_t parts) {
    const std::size_t n = prefix.size() - 1;
    parts = std::max<std::size_t>(1, parts);
    std::vector<std::size_t> bounds(parts + 1, n);
    bounds[0] = 0;
    const std::size_t total = prefix[n];
    for (std::size_t p = 1; p < parts; ++p) {
        const std::size_t target = total * p / parts;
        auto it = std::lower_bound(prefix.begin(), prefix.end(), target);
        bounds[p] = std::max(bounds[p - 1], static_cast<std::size_t>(it - prefix.begin()));
        bounds[p] = std::min(bounds[p], n);
    }
    return bounds;
}

}  // namespace sketchcp

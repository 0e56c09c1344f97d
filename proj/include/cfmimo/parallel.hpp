// SPDX-License-Identifier: Apache-2.0
//
// cfmimo - cell-free massive MIMO IoT simulation and power control
// Copyright (C) 2026 The cfmimo authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace cfmimo
{
    /// Number of worker threads used by parallel_for (at least 1).
    inline std::size_t worker_count()
    {
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : hw;
    }

    /// Runs fn(i) for i in [0, n). Work items are claimed dynamically; fn must only
    /// write to per-index state. The first exception thrown by any item is rethrown.
    template <class Fn>
    void parallel_for(std::size_t n, Fn &&fn, std::size_t threads = 0)
    {
        if (threads == 0)
            threads = worker_count();
        threads = std::min(threads, n);
        if (threads <= 1)
        {
            for (std::size_t i = 0; i < n; ++i)
                fn(i);
            return;
        }

        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&]()
        {
            for (;;)
            {
                const std::size_t i = next.fetch_add(1);
                if (i >= n)
                    return;
                try
                {
                    fn(i);
                }
                catch (...)
                {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    next.store(n);
                }
            }
        };

        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto &t : pool)
            t.join();
        if (error)
            std::rethrow_exception(error);
    }

    /// Pairwise (tree) summation with a fixed shape, independent of scheduling.
    inline double pairwise_sum(std::span<const double> values)
    {
        if (values.empty())
            return 0.0;
        if (values.size() <= 8)
        {
            double s = 0.0;
            for (double v : values)
                s += v;
            return s;
        }
        const std::size_t half = values.size() / 2;
        return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
    }
}

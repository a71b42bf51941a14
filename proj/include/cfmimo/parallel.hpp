// SPDX-License-Identifier: Apache-2.0
//
// cfmimo - link-level simulator for the cell-free massive MIMO uplink
// Copyright (C) 2026 cfmimo contributors
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

#ifndef cfmimo_parallel_H
#define cfmimo_parallel_H

#include <armadillo>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cfmimo
{

// Runs fn(0) .. fn(n-1) across `threads` workers. Each index gets its own
// RNG substream and output slot at the call sites, so results do not depend
// on the thread count.
inline void parallel_for(arma::uword n, arma::uword threads,
                         const std::function<void(arma::uword)>& fn)
{
    if (threads <= 1 || n <= 1)
    {
        for (arma::uword i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<arma::uword> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        while (true)
        {
            const arma::uword i = next.fetch_add(1);
            if (i >= n)
                return;
            try
            {
                fn(i);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const arma::uword count = std::min<arma::uword>(threads, n);
    pool.reserve(count);
    for (arma::uword t = 0; t < count; ++t)
        pool.emplace_back(worker);
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

} // namespace cfmimo

#endif

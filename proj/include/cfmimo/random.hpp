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

#include "common.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace cfmimo
{
    /// SplitMix64 finalizer. Used for counter-based seed derivation.
    constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    /// Derive an independent stream seed from a master seed, a stream tag and a counter.
    constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                        std::uint64_t counter = 0) noexcept
    {
        return splitmix64(splitmix64(master ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)) + counter);
    }

    // Stream tags keep the sub-generators of one realization independent.
    namespace stream
    {
        inline constexpr std::uint64_t network = 1;
        inline constexpr std::uint64_t pilots = 2;
        inline constexpr std::uint64_t small_scale = 3;
        inline constexpr std::uint64_t realization = 4;
        inline constexpr std::uint64_t training = 5;
        inline constexpr std::uint64_t probe = 6;
    }

    /// Explicit RNG state. Not thread-safe; give each thread its own instance.
    class Rng
    {
    public:
        explicit Rng(std::uint64_t seed) : engine_(seed) {}

        double uniform(double lo = 0.0, double hi = 1.0)
        {
            return std::uniform_real_distribution<double>(lo, hi)(engine_);
        }

        double gaussian() { return normal_(engine_); }

        /// CN(0,1): real and imaginary parts N(0, 1/2).
        Complex complex_gaussian()
        {
            const double re = normal_(engine_);
            const double im = normal_(engine_);
            return {re * M_SQRT1_2, im * M_SQRT1_2};
        }

        MatrixXcd complex_gaussian(Index rows, Index cols)
        {
            MatrixXcd out(rows, cols);
            for (Index c = 0; c < cols; ++c)
                for (Index r = 0; r < rows; ++r)
                    out(r, c) = complex_gaussian();
            return out;
        }

        std::uint64_t next_u64() { return engine_(); }

        std::mt19937_64 &engine() { return engine_; }

    private:
        std::mt19937_64 engine_;
        std::normal_distribution<double> normal_{0.0, 1.0};
    };
}

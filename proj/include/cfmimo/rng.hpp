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

#ifndef cfmimo_rng_H
#define cfmimo_rng_H

#include <armadillo>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace cfmimo
{

// Stateless splitmix64 finalizer, used to hash seed paths.
inline std::uint64_t mix64(std::uint64_t z)
{
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

// Derives an independent child seed from a master seed and a key path,
// e.g. derive_seed(seed, {stream::channel, drop, trial}). Workers seeded
// this way never share generator state, so parallel runs stay reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t s = mix64(master + 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t key : path)
        s = mix64(s ^ (key + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2)));
    return s;
}

// Fixed tags for the per-purpose substreams.
namespace stream
{
    constexpr std::uint64_t geometry = 1;
    constexpr std::uint64_t los = 2;
    constexpr std::uint64_t channel = 3;
    constexpr std::uint64_t pilot = 4;
    constexpr std::uint64_t data = 5;
    constexpr std::uint64_t drop = 6;
    constexpr std::uint64_t trial = 7;
}

// A seeded random stream. CN(0,1) means unit variance per complex entry
// (0.5 per real/imaginary part).
class RngStream
{
  public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return unif_(eng_); }                            // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * unif_(eng_); }
    double normal() { return norm_(eng_); }                             // N(0,1)
    bool bernoulli(double p) { return unif_(eng_) < p; }

    std::complex<double> cnormal()
    {
        constexpr double isqrt2 = 0.7071067811865475244;
        return {norm_(eng_) * isqrt2, norm_(eng_) * isqrt2};
    }

    arma::cx_vec cnormal_vec(arma::uword n)
    {
        arma::cx_vec v(n);
        for (arma::uword i = 0; i < n; ++i)
            v[i] = cnormal();
        return v;
    }

    arma::cx_mat cnormal_mat(arma::uword rows, arma::uword cols)
    {
        arma::cx_mat m(rows, cols);
        for (arma::uword c = 0; c < cols; ++c)
            for (arma::uword r = 0; r < rows; ++r)
                m(r, c) = cnormal();
        return m;
    }

  private:
    std::mt19937_64 eng_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

} // namespace cfmimo

#endif

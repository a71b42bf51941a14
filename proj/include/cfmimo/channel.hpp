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

#ifndef cfmimo_channel_H
#define cfmimo_channel_H

#include <armadillo>
#include <complex>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

#include "cfmimo/geometry.hpp"
#include "cfmimo/rng.hpp"

namespace cfmimo
{

// Uniform-linear-array response at angle of arrival theta. Entry i (0-based)
// is exp(i * 2*pi * (d/lambda) * i * sin(theta)); the first entry is exactly 1.
inline arma::cx_vec steering_vector(double theta_rad, arma::uword n_antennas, double spacing_m,
                                    double wavelength_m)
{
    if (n_antennas < 1)
        throw std::invalid_argument("steering_vector: need at least one antenna");
    arma::cx_vec a(n_antennas);
    const double phase_step = 2.0 * std::numbers::pi * spacing_m / wavelength_m * std::sin(theta_rad);
    for (arma::uword i = 0; i < n_antennas; ++i)
        a[i] = std::polar(1.0, phase_step * static_cast<double>(i));
    a[0] = 1.0;
    return a;
}

// Deterministic LoS channel between AP m and UE k:
//   a(theta_mk) * sqrt(G_m G_k) * (l'_k l_m / (4 pi x_mk)) * exp(i 2 pi x_mk / lambda).
inline arma::cx_vec los_channel(const NetworkGeometry& geom, const LinkSet& links, arma::uword m,
                                arma::uword k)
{
    const double x = links.dist3d_m(m, k);
    const double mag = std::sqrt(geom.aps[m].gain * geom.ues[k].gain) * geom.ues[k].height_m *
                       geom.aps[m].height_m / (4.0 * std::numbers::pi * x);
    const std::complex<double> phase = std::polar(mag, 2.0 * std::numbers::pi * x / geom.carrier_wavelength_m);
    return steering_vector(links.aoa_rad(m, k), geom.n_antennas, geom.antenna_spacing_m,
                           geom.carrier_wavelength_m) *
           phase;
}

// Independent Bernoulli(P_mk) LoS indicators.
inline arma::umat draw_los_indicators(const LinkSet& links, RngStream& rng)
{
    const arma::uword M = links.n_aps(), K = links.n_ues();
    arma::umat delta(M, K);
    for (arma::uword k = 0; k < K; ++k)
        for (arma::uword m = 0; m < M; ++m)
        {
            const double p = links.los_prob(m, k);
            if (p < 0.0 || p > 1.0)
                throw std::invalid_argument("draw_los_indicators: P_mk outside [0,1]");
            delta(m, k) = rng.bernoulli(p) ? 1 : 0;
        }
    return delta;
}

// One channel draw. H is MN x K with AP-major stacking: rows [m*N, (m+1)*N)
// hold AP m, so the per-AP blocks H_m are contiguous. los_part holds the
// delta-masked LoS contribution and nlos_part the sqrt(beta)-scaled Rayleigh
// part, hence H = los_part + nlos_part.
struct ChannelRealization
{
    arma::umat delta;       // M x K LoS indicators
    arma::cx_mat H;         // MN x K
    arma::cx_mat los_part;  // MN x K, delta_mk * hbar_mk blocks
    arma::cx_mat nlos_part; // MN x K, sqrt(beta_mk) * hdot_mk blocks
};

inline ChannelRealization draw_channel(const NetworkGeometry& geom, const LinkSet& links,
                                       const arma::umat& delta, RngStream& rng)
{
    const arma::uword M = geom.n_aps(), K = geom.n_ues(), N = geom.n_antennas;
    if (delta.n_rows != M || delta.n_cols != K)
        throw std::invalid_argument("draw_channel: delta must be M x K");

    ChannelRealization ch;
    ch.delta = delta;
    ch.los_part.zeros(M * N, K);
    ch.nlos_part.set_size(M * N, K);
    for (arma::uword k = 0; k < K; ++k)
        for (arma::uword m = 0; m < M; ++m)
        {
            const arma::span rows(m * N, (m + 1) * N - 1);
            if (delta(m, k))
                ch.los_part(rows, arma::span(k)) = los_channel(geom, links, m, k);
            ch.nlos_part(rows, arma::span(k)) =
                std::sqrt(links.pathloss(m, k)) * rng.cnormal_vec(N);
        }
    ch.H = ch.los_part + ch.nlos_part;
    return ch;
}

// Binary dump of a complex matrix for cross-implementation regression:
// row-major, interleaved re/im, little-endian 64-bit floats.
inline void dump_channel(const arma::cx_mat& H, const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f)
        throw std::runtime_error("dump_channel: cannot open " + path);
    for (arma::uword r = 0; r < H.n_rows; ++r)
        for (arma::uword c = 0; c < H.n_cols; ++c)
        {
            const double re = H(r, c).real(), im = H(r, c).imag();
            std::fwrite(&re, sizeof(double), 1, f);
            std::fwrite(&im, sizeof(double), 1, f);
        }
    std::fclose(f);
}

inline arma::cx_mat load_channel_dump(const std::string& path, arma::uword rows, arma::uword cols)
{
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f)
        throw std::runtime_error("load_channel_dump: cannot open " + path);
    arma::cx_mat H(rows, cols);
    for (arma::uword r = 0; r < rows; ++r)
        for (arma::uword c = 0; c < cols; ++c)
        {
            double re = 0.0, im = 0.0;
            if (std::fread(&re, sizeof(double), 1, f) != 1 ||
                std::fread(&im, sizeof(double), 1, f) != 1)
            {
                std::fclose(f);
                throw std::runtime_error("load_channel_dump: truncated file " + path);
            }
            H(r, c) = {re, im};
        }
    std::fclose(f);
    return H;
}

} // namespace cfmimo

#endif

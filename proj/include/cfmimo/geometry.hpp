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

#ifndef cfmimo_geometry_H
#define cfmimo_geometry_H

#include <armadillo>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cfmimo/rng.hpp"

namespace cfmimo
{

inline constexpr double speed_of_light = 299792458.0; // m/s

// Built-up environment that blocks line-of-sight paths.
struct BlockageEnvironment
{
    double alpha = 0.5;        // fraction of built-up area, dimensionless in [0,1]
    double mu_per_km2 = 300.0; // blockage density, count per km^2
    double gamma_m = 20.0;     // average blockage altitude, m

    void validate() const
    {
        if (alpha < 0.0 || alpha > 1.0)
            throw std::invalid_argument("BlockageEnvironment: alpha must lie in [0,1]");
        if (mu_per_km2 < 0.0)
            throw std::invalid_argument("BlockageEnvironment: mu must be non-negative");
        if (!(gamma_m > 0.0))
            throw std::invalid_argument("BlockageEnvironment: gamma must be positive");
    }
};

// Reading of the blockage-count exponent in the LoS probability.
//   scaled_by_distance: n = sqrt(alpha*mu) * d   (default, matches the ITU
//                       blockage-crossing count and the reported coverage)
//   literal_sqrt:       n = sqrt(alpha*mu*d), d in km (formula read verbatim)
enum class LosExponent
{
    scaled_by_distance,
    literal_sqrt
};

struct AccessPoint
{
    double x_km = 0.0;
    double y_km = 0.0;
    double height_m = 10.0;      // antenna height l_m
    double broadside_rad = 0.0;  // array broadside orientation
    double gain = 1.0;           // linear antenna gain G_m
};

struct UserEquipment
{
    double x_km = 0.0;
    double y_km = 0.0;
    double height_m = 1.5;       // antenna height l'_k
    double gain = 1.0;           // linear antenna gain G_k
};

struct NetworkGeometry
{
    std::vector<AccessPoint> aps;
    std::vector<UserEquipment> ues;
    arma::uword n_antennas = 1;           // N, antennas per AP (uniform linear array)
    double antenna_spacing_m = 0.0749481; // d, defaults to lambda/2 at 2 GHz
    double carrier_wavelength_m = 0.1498962;
    double area_side_km = 1.0;
    BlockageEnvironment env;

    arma::uword n_aps() const { return aps.size(); }
    arma::uword n_ues() const { return ues.size(); }

    void validate() const
    {
        if (aps.empty() || ues.empty())
            throw std::invalid_argument("NetworkGeometry: need at least one AP and one UE");
        if (n_antennas < 1)
            throw std::invalid_argument("NetworkGeometry: n_antennas must be >= 1");
        if (!(antenna_spacing_m > 0.0) || !(carrier_wavelength_m > 0.0))
            throw std::invalid_argument("NetworkGeometry: spacing and wavelength must be positive");
        if (!(area_side_km > 0.0))
            throw std::invalid_argument("NetworkGeometry: area side must be positive");
        env.validate();
        for (const auto& ap : aps)
            if (ap.x_km < 0.0 || ap.x_km > area_side_km || ap.y_km < 0.0 || ap.y_km > area_side_km)
                throw std::invalid_argument("NetworkGeometry: AP outside the deployment area");
        for (const auto& ue : ues)
            if (ue.x_km < 0.0 || ue.x_km > area_side_km || ue.y_km < 0.0 || ue.y_km > area_side_km)
                throw std::invalid_argument("NetworkGeometry: UE outside the deployment area");
        for (const auto& ap : aps)
            for (const auto& ue : ues)
                if (!(ap.height_m > ue.height_m) || !(ue.height_m > 0.0))
                    throw std::invalid_argument("NetworkGeometry: requires l_m > l'_k > 0");
    }
};

// Per-link derived quantities, all M x K (row = AP, column = UE).
struct LinkSet
{
    arma::mat dist2d_km;  // horizontal distance d_mk
    arma::mat dist3d_m;   // 3D link distance x_mk
    arma::mat aoa_rad;    // angle of arrival at the AP, relative to broadside
    arma::mat pathloss;   // NLoS pathloss beta_mk = min{1, (d_mk/d0)^-eta}
    arma::mat los_prob;   // LoS link probability P_mk

    arma::uword n_aps() const { return dist2d_km.n_rows; }
    arma::uword n_ues() const { return dist2d_km.n_cols; }
};

// Standard error function; the blockage model is the only consumer.
inline double erf(double z) { return std::erf(z); }

// Probability that a single blockage crossed by the link obstructs the ray:
// omega = sqrt(pi/2) * gamma / (l_m - l'_k) * [erf(l_m/(gamma sqrt2)) - erf(l'_k/(gamma sqrt2))],
// with the analytic limit exp(-l'^2 / (2 gamma^2)) for near-equal heights.
inline double los_omega(double ap_height_m, double ue_height_m, const BlockageEnvironment& env)
{
    env.validate();
    const double gap = ap_height_m - ue_height_m;
    if (!(gap > 0.0) || !(ue_height_m > 0.0))
        throw std::domain_error("los_omega: requires l_m > l'_k > 0");
    const double g = env.gamma_m;
    if (gap < 1e-6)
        return std::exp(-ue_height_m * ue_height_m / (2.0 * g * g));
    constexpr double sqrt_half_pi = 1.2533141373155002512; // sqrt(pi/2)
    const double isqrt2g = 1.0 / (g * std::numbers::sqrt2);
    return sqrt_half_pi * g / gap * (erf(ap_height_m * isqrt2g) - erf(ue_height_m * isqrt2g));
}

// LoS link probability P = (1 - omega)^n for a link of horizontal length
// d_km between antennas at ap_height_m and ue_height_m; n is the expected
// number of crossed blockages (see LosExponent).
inline double los_probability(double d_km, double ap_height_m, double ue_height_m,
                              const BlockageEnvironment& env,
                              LosExponent convention = LosExponent::scaled_by_distance)
{
    if (d_km < 0.0)
        throw std::domain_error("los_probability: negative distance");
    const double omega = los_omega(ap_height_m, ue_height_m, env);
    const double am = env.alpha * env.mu_per_km2;
    const double n = (convention == LosExponent::scaled_by_distance)
                         ? std::sqrt(am) * d_km
                         : std::sqrt(am * d_km);
    if (n == 0.0)
        return 1.0;
    const double p = std::pow(1.0 - omega, n);
    return std::clamp(p, 0.0, 1.0);
}

// Deployment parameters for uniform random placement.
struct GeometryParams
{
    arma::uword n_aps = 256;
    arma::uword n_ues = 16;
    double area_side_km = 1.0;
    double ap_height_m = 10.0;
    double ue_height_m = 1.5;
    arma::uword n_antennas = 1;
    double carrier_freq_hz = 2.0e9;
    double antenna_spacing_m = 0.0; // 0 -> lambda/2
    double ap_gain = 1.0;
    double ue_gain = 1.0;
    BlockageEnvironment env;
};

// Places APs and UEs i.i.d. uniformly on the square, with independent
// uniform broadside orientations per AP.
inline NetworkGeometry place_uniform(const GeometryParams& p, std::uint64_t seed)
{
    if (p.n_aps < 1 || p.n_ues < 1)
        throw std::invalid_argument("place_uniform: need at least one AP and one UE");
    if (!(p.area_side_km > 0.0))
        throw std::invalid_argument("place_uniform: area side must be positive");
    if (!(p.carrier_freq_hz > 0.0))
        throw std::invalid_argument("place_uniform: carrier frequency must be positive");

    NetworkGeometry geom;
    geom.n_antennas = p.n_antennas;
    geom.carrier_wavelength_m = speed_of_light / p.carrier_freq_hz;
    geom.antenna_spacing_m =
        p.antenna_spacing_m > 0.0 ? p.antenna_spacing_m : 0.5 * geom.carrier_wavelength_m;
    geom.area_side_km = p.area_side_km;
    geom.env = p.env;

    RngStream rng(derive_seed(seed, {stream::geometry}));
    geom.aps.resize(p.n_aps);
    for (auto& ap : geom.aps)
    {
        ap.x_km = rng.uniform(0.0, p.area_side_km);
        ap.y_km = rng.uniform(0.0, p.area_side_km);
        ap.height_m = p.ap_height_m;
        ap.broadside_rad = rng.uniform(0.0, 2.0 * std::numbers::pi);
        ap.gain = p.ap_gain;
    }
    geom.ues.resize(p.n_ues);
    for (auto& ue : geom.ues)
    {
        ue.x_km = rng.uniform(0.0, p.area_side_km);
        ue.y_km = rng.uniform(0.0, p.area_side_km);
        ue.height_m = p.ue_height_m;
        ue.gain = p.ue_gain;
    }
    geom.validate();
    return geom;
}

inline double wrap_to_pi(double angle)
{
    angle = std::fmod(angle + std::numbers::pi, 2.0 * std::numbers::pi);
    if (angle < 0.0)
        angle += 2.0 * std::numbers::pi;
    return angle - std::numbers::pi;
}

// Computes every deterministic per-link quantity. d0_m is the pathloss
// reference distance in meters, eta the pathloss exponent (> 2).
inline LinkSet link_metrics(const NetworkGeometry& geom, double d0_m, double eta,
                            LosExponent convention = LosExponent::scaled_by_distance)
{
    if (!(d0_m > 0.0))
        throw std::invalid_argument("link_metrics: d0 must be positive");
    if (!(eta > 2.0))
        throw std::invalid_argument("link_metrics: pathloss exponent must exceed 2");

    const arma::uword M = geom.n_aps();
    const arma::uword K = geom.n_ues();
    LinkSet links;
    links.dist2d_km.set_size(M, K);
    links.dist3d_m.set_size(M, K);
    links.aoa_rad.set_size(M, K);
    links.pathloss.set_size(M, K);
    links.los_prob.set_size(M, K);

    for (arma::uword m = 0; m < M; ++m)
    {
        const auto& ap = geom.aps[m];
        for (arma::uword k = 0; k < K; ++k)
        {
            const auto& ue = geom.ues[k];
            if (!(ap.height_m > ue.height_m))
                throw std::domain_error("link_metrics: AP must be higher than UE");

            const double dx = ue.x_km - ap.x_km;
            const double dy = ue.y_km - ap.y_km;
            const double d_km = std::hypot(dx, dy);
            const double d_m = d_km * 1000.0;
            const double gap = ap.height_m - ue.height_m;

            links.dist2d_km(m, k) = d_km;
            links.dist3d_m(m, k) = std::hypot(d_m, gap);
            links.aoa_rad(m, k) = wrap_to_pi(std::atan2(dy, dx) - ap.broadside_rad);
            links.pathloss(m, k) = d_m <= d0_m ? 1.0 : std::pow(d_m / d0_m, -eta);
            links.los_prob(m, k) =
                los_probability(d_km, ap.height_m, ue.height_m, geom.env, convention);
        }
    }
    return links;
}

// Squared per-antenna LoS amplitude a_mk = G_k G_m (l'_k l_m / (4 pi x_mk))^2.
inline double los_power(const NetworkGeometry& geom, const LinkSet& links, arma::uword m,
                        arma::uword k)
{
    const double num = geom.ues[k].height_m * geom.aps[m].height_m;
    const double amp = num / (4.0 * std::numbers::pi * links.dist3d_m(m, k));
    return geom.aps[m].gain * geom.ues[k].gain * amp * amp;
}

} // namespace cfmimo

#endif

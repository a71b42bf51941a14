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

#ifndef cfmimo_detection_H
#define cfmimo_detection_H

#include <armadillo>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "cfmimo/rng.hpp"

namespace cfmimo
{

// SIR/SINR samples with an empty denominator are capped here (+200 dB).
inline constexpr double sinr_cap_linear = 1e20;

// Finite symbol set with unit average energy. Decision ties resolve to the
// lowest index, so the point order is part of the contract.
struct Constellation
{
    std::string name;
    arma::cx_vec points;

    void validate() const
    {
        if (points.is_empty())
            throw std::invalid_argument("Constellation: empty symbol set");
        const double energy = arma::mean(arma::square(arma::abs(points)));
        if (std::abs(energy - 1.0) > 1e-9)
            throw std::invalid_argument("Constellation '" + name + "': mean energy must be 1");
    }

    static Constellation bpsk() { return {"bpsk", arma::cx_vec{{1.0, 0.0}, {-1.0, 0.0}}}; }

    static Constellation qpsk()
    {
        constexpr double s = 0.7071067811865475244;
        return {"qpsk", arma::cx_vec{{s, s}, {s, -s}, {-s, s}, {-s, -s}}};
    }

    static Constellation qam16()
    {
        arma::cx_vec pts(16);
        const double levels[4] = {-3.0, -1.0, 1.0, 3.0};
        const double scale = 1.0 / std::sqrt(10.0);
        arma::uword i = 0;
        for (double re : levels)
            for (double im : levels)
                pts[i++] = std::complex<double>(re * scale, im * scale);
        return {"qam16", pts};
    }

    static Constellation by_name(const std::string& name)
    {
        if (name == "bpsk")
            return bpsk();
        if (name == "qpsk")
            return qpsk();
        if (name == "qam16")
            return qam16();
        throw std::invalid_argument("unknown constellation: " + name);
    }
};

// Uplink data-phase observation y = H s + sqrt(N0) w at the CPU. The noise
// draw can be captured for reconstruction checks.
inline arma::cx_vec uplink_receive(const arma::cx_mat& H, const arma::cx_vec& symbols,
                                   double noise_power, RngStream& rng,
                                   arma::cx_vec* noise_out = nullptr)
{
    if (H.n_cols != symbols.n_elem)
        throw std::invalid_argument("uplink_receive: symbol count must match channel columns");
    arma::cx_vec w = rng.cnormal_vec(H.n_rows);
    arma::cx_vec y = H * symbols + std::sqrt(noise_power) * w;
    if (noise_out)
        *noise_out = std::move(w);
    return y;
}

// Output of a linear combiner. Row k of `gains` holds the effective channel
// of stream k, so r = gains * s + noise holds to machine precision.
// Under estimated CSI the signal path splits into a through-estimate part
// (gains_est) and a through-error part (gains_err); they sum to `gains`.
// noise_var(k) is the conditional effective noise power N0 ||v_k||^2.
struct CombinerOutput
{
    arma::cx_vec r;         // combined per-stream observations
    arma::cx_mat gains;     // K x K effective gains, gains(k,l) multiplies s_l
    arma::cx_mat gains_est; // through-estimate split (equals gains for accurate CSI)
    arma::cx_mat gains_err; // through-error split (zero for accurate CSI)
    arma::cx_vec noise;     // effective noise per stream, r - gains * s
    arma::vec noise_var;    // conditional noise variance per stream
};

// Conjugate beamforming at the APs, summed at the CPU: r_k = csi_k^H y.
// csi is the CSI the APs use (true H or estimate), H_true the channel that
// actually shaped y.
inline CombinerOutput conjugate_combine(const arma::cx_mat& csi, const arma::cx_mat& H_true,
                                        const arma::cx_vec& y, const arma::cx_vec& symbols,
                                        double noise_power)
{
    if (csi.n_rows != H_true.n_rows || csi.n_cols != H_true.n_cols || y.n_elem != csi.n_rows)
        throw std::invalid_argument("conjugate_combine: inconsistent dimensions");
    CombinerOutput out;
    out.r = csi.t() * y;
    out.gains = csi.t() * H_true;
    out.gains_est = csi.t() * csi;
    out.gains_err = out.gains - out.gains_est;
    out.noise = out.r - out.gains * symbols;
    out.noise_var = noise_power * arma::sum(arma::square(arma::abs(csi)), 0).t();
    return out;
}

// Centralized (regularized) MMSE combining, V = (csi csi^H + psi I)^-1 csi.
// Implemented through the K x K Gram system: V^H y = (csi^H csi + psi I)^-1 csi^H y.
inline CombinerOutput mmse_combine(const arma::cx_mat& csi, const arma::cx_mat& H_true,
                                   const arma::cx_vec& y, const arma::cx_vec& symbols,
                                   double noise_power, double regularizer)
{
    if (!(regularizer > 0.0))
        throw std::invalid_argument("mmse_combine: regularizer must be positive");
    if (csi.n_rows != H_true.n_rows || csi.n_cols != H_true.n_cols || y.n_elem != csi.n_rows)
        throw std::invalid_argument("mmse_combine: inconsistent dimensions");

    const arma::uword K = csi.n_cols;
    const arma::cx_mat gram = csi.t() * csi + regularizer * arma::eye<arma::cx_mat>(K, K);
    CombinerOutput out;
    out.r = arma::solve(gram, arma::cx_vec(csi.t() * y), arma::solve_opts::likely_sympd);
    out.gains = arma::solve(gram, arma::cx_mat(csi.t() * H_true), arma::solve_opts::likely_sympd);
    out.gains_est =
        arma::solve(gram, arma::cx_mat(csi.t() * csi), arma::solve_opts::likely_sympd);
    out.gains_err = out.gains - out.gains_est;
    out.noise = out.r - out.gains * symbols;
    // ||v_k||^2 = [ (G+psi I)^-1 G (G+psi I)^-1 ]_kk with G = csi^H csi
    const arma::cx_mat inner = arma::solve(
        gram, arma::cx_mat((csi.t() * csi) * arma::solve(gram, arma::eye<arma::cx_mat>(K, K),
                                                         arma::solve_opts::likely_sympd)),
        arma::solve_opts::likely_sympd);
    out.noise_var = noise_power * arma::real(inner.diag());
    return out;
}

// Reference route through the explicit (MN)x(MN) inverse; kept for
// cross-checking the Gram-system implementation.
inline CombinerOutput mmse_combine_reference(const arma::cx_mat& csi, const arma::cx_mat& H_true,
                                             const arma::cx_vec& y, const arma::cx_vec& symbols,
                                             double noise_power, double regularizer)
{
    const arma::uword MN = csi.n_rows;
    const arma::cx_mat inv =
        arma::inv(arma::cx_mat(csi * csi.t() + regularizer * arma::eye<arma::cx_mat>(MN, MN)));
    const arma::cx_mat V = inv * csi;
    CombinerOutput out;
    out.r = V.t() * y;
    out.gains = V.t() * H_true;
    out.gains_est = V.t() * csi;
    out.gains_err = out.gains - out.gains_est;
    out.noise = out.r - out.gains * symbols;
    out.noise_var = noise_power * arma::sum(arma::square(arma::abs(V)), 0).t();
    return out;
}

// Hard symbol decision: argmin_s |r - gain * s|, ties to the lowest index.
inline arma::uword stream_hard_detect(std::complex<double> r, std::complex<double> gain,
                                      const Constellation& cons)
{
    if (gain == std::complex<double>(0.0, 0.0))
        throw std::domain_error("stream_hard_detect: zero effective gain");
    arma::uword best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (arma::uword i = 0; i < cons.points.n_elem; ++i)
    {
        const double d = std::abs(r - gain * cons.points[i]);
        if (d < best_d) // strict: exact ties keep the lowest index
        {
            best_d = d;
            best = i;
        }
    }
    return best;
}

// Per-symbol posteriors from Gaussian likelihoods with the given
// interference-plus-noise power, normalized over the constellation.
inline arma::vec stream_soft_probs(std::complex<double> r, std::complex<double> gain,
                                   double interference_plus_noise_power, const Constellation& cons)
{
    if (!(interference_plus_noise_power > 0.0))
        throw std::invalid_argument("stream_soft_probs: power must be positive");
    arma::vec d2(cons.points.n_elem);
    for (arma::uword i = 0; i < cons.points.n_elem; ++i)
        d2[i] = std::norm(r - gain * cons.points[i]);
    d2 -= d2.min(); // exp underflow guard; ratios are unchanged
    arma::vec p = arma::exp(-d2 / interference_plus_noise_power);
    return p / arma::accu(p);
}

inline void joint_search_guard(arma::uword constellation_size, arma::uword n_users,
                               arma::uword k_max, double budget)
{
    if (n_users > k_max)
        throw std::domain_error("joint detection: user count exceeds the complexity guard");
    const double cost = std::pow(static_cast<double>(constellation_size),
                                 static_cast<double>(n_users));
    if (cost > budget)
        throw std::domain_error("joint detection: |S|^K = " + std::to_string(cost) +
                                " exceeds the search budget");
}

// Exhaustive ML vector detection over S^K: argmin ||y - H s||^2.
// Cost is O(|S|^K); guarded by k_max and an operation budget.
inline arma::uvec joint_hard_detect(const arma::cx_vec& y, const arma::cx_mat& csi,
                                    const Constellation& cons, arma::uword k_max = 4,
                                    double budget = 1e6)
{
    const arma::uword K = csi.n_cols, S = cons.points.n_elem;
    joint_search_guard(S, K, k_max, budget);

    arma::uvec idx(K, arma::fill::zeros), best = idx;
    double best_d = std::numeric_limits<double>::infinity();
    arma::cx_vec s(K);
    while (true)
    {
        for (arma::uword k = 0; k < K; ++k)
            s[k] = cons.points[idx[k]];
        const double d = arma::accu(arma::square(arma::abs(y - csi * s)));
        if (d < best_d)
        {
            best_d = d;
            best = idx;
        }
        arma::uword k = K;
        while (k > 0 && ++idx[k - 1] == S)
            idx[--k] = 0;
        if (k == 0)
            break;
    }
    return best;
}

// Posterior over all |S|^K symbol vectors, Gaussian likelihoods normalized.
// Vector i decodes with user 0 as the most significant digit:
// index(s) = sum_k idx_k * |S|^(K-1-k).
inline arma::vec joint_soft_probs(const arma::cx_vec& y, const arma::cx_mat& csi,
                                  const Constellation& cons, double noise_power,
                                  arma::uword k_max = 4, double budget = 1e6)
{
    if (!(noise_power > 0.0))
        throw std::invalid_argument("joint_soft_probs: noise power must be positive");
    const arma::uword K = csi.n_cols, S = cons.points.n_elem;
    joint_search_guard(S, K, k_max, budget);

    const arma::uword total = static_cast<arma::uword>(std::llround(
        std::pow(static_cast<double>(S), static_cast<double>(K))));
    arma::vec d2(total);
    arma::uvec idx(K, arma::fill::zeros);
    arma::cx_vec s(K);
    for (arma::uword i = 0; i < total; ++i)
    {
        for (arma::uword k = 0; k < K; ++k)
            s[k] = cons.points[idx[k]];
        d2[i] = arma::accu(arma::square(arma::abs(y - csi * s)));
        arma::uword k = K;
        while (k > 0 && ++idx[k - 1] == S)
            idx[--k] = 0;
    }
    d2 -= d2.min();
    arma::vec p = arma::exp(-d2 / noise_power);
    return p / arma::accu(p);
}

// Per-UE signal-to-interference ratio of a combiner output; zero
// interference saturates at the cap.
inline arma::vec sir_samples(const CombinerOutput& out, const arma::vec& symbol_powers)
{
    const arma::uword K = out.gains.n_rows;
    arma::vec sir(K);
    for (arma::uword k = 0; k < K; ++k)
    {
        const double sig = std::norm(out.gains(k, k)) * symbol_powers[k];
        double interf = 0.0;
        for (arma::uword l = 0; l < K; ++l)
            if (l != k)
                interf += std::norm(out.gains(k, l)) * symbol_powers[l];
        sir[k] = interf > 0.0 ? std::min(sig / interf, sinr_cap_linear)
                              : (sig > 0.0 ? sinr_cap_linear : 0.0);
    }
    return sir;
}

// Per-UE SINR: adds the conditional noise power and, under estimated CSI,
// the through-error signal leakage to the denominator. The through-estimate
// gain carries the useful signal.
inline arma::vec sinr_samples(const CombinerOutput& out, const arma::vec& symbol_powers)
{
    const arma::uword K = out.gains.n_rows;
    arma::vec sinr(K);
    for (arma::uword k = 0; k < K; ++k)
    {
        const double sig = std::norm(out.gains_est(k, k)) * symbol_powers[k];
        double denom = out.noise_var[k];
        denom += std::norm(out.gains_err(k, k)) * symbol_powers[k];
        for (arma::uword l = 0; l < K; ++l)
            if (l != k)
                denom += std::norm(out.gains(k, l)) * symbol_powers[l];
        sinr[k] = denom > 0.0 ? std::min(sig / denom, sinr_cap_linear)
                              : (sig > 0.0 ? sinr_cap_linear : 0.0);
    }
    return sinr;
}

} // namespace cfmimo

#endif

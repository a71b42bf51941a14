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

#ifndef cfmimo_estimation_H
#define cfmimo_estimation_H

#include <armadillo>
#include <cmath>
#include <stdexcept>

#include "cfmimo/channel.hpp"
#include "cfmimo/geometry.hpp"
#include "cfmimo/rng.hpp"

namespace cfmimo
{

// Uplink training configuration. K orthonormal pilots of length K are
// assumed, so the despread observation per link is y' = sqrt(Ep) h + n.
// Two power modes:
//   global_power:  one Ep for every UE/link.
//   per_link_snr:  Ep_mk chosen so the received pilot SNR
//                  Ep * tr(Sigma_hh,mk) / (N * N0) hits pilot_snr_db.
struct PilotConfig
{
    enum class Mode
    {
        global_power,
        per_link_snr
    };
    Mode mode = Mode::per_link_snr;
    double pilot_power = 1.0;   // Ep, used in global_power mode
    double pilot_snr_db = 20.0; // target per-link received pilot SNR
    double noise_power = 1.0;   // N0

    void validate() const
    {
        if (!(noise_power > 0.0))
            throw std::invalid_argument("PilotConfig: noise power must be positive");
        if (mode == Mode::global_power && !(pilot_power > 0.0))
            throw std::invalid_argument("PilotConfig: pilot power must be positive");
    }
};

// Rows are pilot sequences: pilots(k, n) = psi_k[n]. The identity is an
// orthonormal set; any other orthonormal choice is equivalent after
// despreading.
inline arma::cx_mat orthonormal_pilots(arma::uword K) { return arma::eye<arma::cx_mat>(K, K); }

inline void require_orthonormal(const arma::cx_mat& pilots)
{
    const arma::cx_mat gram = pilots * pilots.t();
    if (arma::norm(gram - arma::eye<arma::cx_mat>(gram.n_rows, gram.n_cols), "fro") > 1e-10)
        throw std::invalid_argument("pilots are not orthonormal");
}

// Received pilot block over the K training instants:
//   y[n] = sum_k sqrt(Ep) h_k psi_k[n] + sqrt(N0) w[n].
// H is the stacked MN x K channel; the result is MN x K (column = instant).
inline arma::cx_mat pilot_receive(const arma::cx_mat& H, const arma::cx_mat& pilots, double pilot_power,
                                  double noise_power, RngStream& rng)
{
    require_orthonormal(pilots);
    if (pilots.n_rows != H.n_cols)
        throw std::invalid_argument("pilot_receive: one pilot per UE required");
    return std::sqrt(pilot_power) * H * pilots +
           std::sqrt(noise_power) * rng.cnormal_mat(H.n_rows, pilots.n_cols);
}

// Despreads user k's pilot: y'_k = sum_n y[n] psi_k*[n] = sqrt(Ep) h_k + sqrt(N0) w'_k.
inline arma::cx_vec despread(const arma::cx_mat& received, const arma::cx_mat& pilots, arma::uword k)
{
    require_orthonormal(pilots);
    if (k >= pilots.n_rows)
        throw std::invalid_argument("despread: pilot index out of range");
    return received * arma::conj(pilots.row(k).st());
}

// Conditional-on-delta second-moment matrices of one link (Sigma_hh), of its
// despread observation (Sigma_yy) and their cross moment (Sigma_hy).
struct LinkCovariances
{
    arma::cx_mat hh; // Sigma_hh = delta * a_mk * a a^H + beta I
    arma::cx_mat yy; // Sigma_y'y' = Ep Sigma_hh + N0 I
    arma::cx_mat hy; // Sigma_hy' = sqrt(Ep) Sigma_hh
};

inline arma::cx_mat sigma_hh(const NetworkGeometry& geom, const LinkSet& links, arma::uword m,
                             arma::uword k, bool los)
{
    const arma::uword N = geom.n_antennas;
    arma::cx_mat s = links.pathloss(m, k) * arma::eye<arma::cx_mat>(N, N);
    if (los)
    {
        const arma::cx_vec a = steering_vector(links.aoa_rad(m, k), N, geom.antenna_spacing_m,
                                               geom.carrier_wavelength_m);
        s += los_power(geom, links, m, k) * a * a.t();
    }
    return s;
}

inline LinkCovariances link_covariances(const NetworkGeometry& geom, const LinkSet& links,
                                        arma::uword m, arma::uword k, bool los, double pilot_power,
                                        double noise_power)
{
    LinkCovariances cov;
    cov.hh = sigma_hh(geom, links, m, k, los);
    cov.yy = pilot_power * cov.hh +
             noise_power * arma::eye<arma::cx_mat>(cov.hh.n_rows, cov.hh.n_cols);
    cov.hy = std::sqrt(pilot_power) * cov.hh;
    return cov;
}

// LMMSE estimate hhat = sqrt(Ep) Sigma_hh Sigma_yy^-1 y'. Optionally returns
// the estimate covariance C = Ep Sigma_hh Sigma_yy^-1 Sigma_hh and the error
// covariance Cbar = Sigma_hh - C; these satisfy C + Cbar = Sigma_hh.
inline arma::cx_vec lmmse_estimate(const arma::cx_vec& despread_obs, const LinkCovariances& cov,
                                   double pilot_power, arma::cx_mat* estimate_cov = nullptr,
                                   arma::cx_mat* error_cov = nullptr)
{
    const arma::cx_mat filter =
        std::sqrt(pilot_power) *
        arma::solve(cov.yy, cov.hh, arma::solve_opts::likely_sympd).t(); // (Sigma_yy^-1 Sigma_hh)^H
    if (estimate_cov || error_cov)
    {
        const arma::cx_mat c = std::sqrt(pilot_power) * filter * cov.hh;
        if (estimate_cov)
            *estimate_cov = c;
        if (error_cov)
            *error_cov = cov.hh - c;
    }
    return filter * despread_obs;
}

// Estimation error e = h - hhat; LMMSE orthogonality makes e uncorrelated
// with hhat, with covariance Cbar.
inline arma::cx_vec error_decomposition(const arma::cx_vec& h, const arma::cx_vec& hhat)
{
    return h - hhat;
}

// Hermitian PSD square root via eigendecomposition. Eigenvalues slightly
// negative from roundoff (>= -1e-10) are clipped to zero.
inline arma::cx_mat psd_sqrt(const arma::cx_mat& A)
{
    if (arma::norm(A - A.t(), "fro") > 1e-10 * std::max(1.0, arma::norm(A, "fro")))
        throw std::invalid_argument("psd_sqrt: input is not Hermitian");
    arma::vec eval;
    arma::cx_mat evec;
    if (!arma::eig_sym(eval, evec, (A + A.t()) / 2.0))
        throw std::runtime_error("psd_sqrt: eigendecomposition failed");
    if (eval.min() < -1e-10 * std::max(1.0, std::abs(eval.max())))
        throw std::invalid_argument("psd_sqrt: input is not PSD");
    eval.transform([](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; });
    return evec * arma::diagmat(eval) * evec.t();
}

// Precomputed per-link LMMSE machinery for both values of the LoS indicator.
// Covariances are deterministic given the geometry, so estimating a channel
// realization reduces to one small filter product per link.
struct LinkEstimator
{
    double pilot_power = 0.0;
    arma::cx_mat sigma; // Sigma_hh
    arma::cx_mat W;     // sqrt(Ep) Sigma_hh Sigma_yy^-1
    arma::cx_mat C;     // estimate covariance
    arma::cx_mat Cbar;  // error covariance
};

struct EstimatorBank
{
    double noise_power = 1.0;
    arma::field<LinkEstimator> nlos; // M x K, delta = 0
    arma::field<LinkEstimator> los;  // M x K, delta = 1

    const LinkEstimator& at(arma::uword m, arma::uword k, bool has_los) const
    {
        return has_los ? los(m, k) : nlos(m, k);
    }
};

inline EstimatorBank build_estimator_bank(const NetworkGeometry& geom, const LinkSet& links,
                                          const PilotConfig& pilots)
{
    pilots.validate();
    const arma::uword M = geom.n_aps(), K = geom.n_ues(), N = geom.n_antennas;
    const double snr_lin = std::pow(10.0, pilots.pilot_snr_db / 10.0);

    EstimatorBank bank;
    bank.noise_power = pilots.noise_power;
    bank.nlos.set_size(M, K);
    bank.los.set_size(M, K);
    for (arma::uword k = 0; k < K; ++k)
        for (arma::uword m = 0; m < M; ++m)
            for (int d = 0; d < 2; ++d)
            {
                LinkEstimator& est = d ? bank.los(m, k) : bank.nlos(m, k);
                est.sigma = sigma_hh(geom, links, m, k, d != 0);
                est.pilot_power = pilots.mode == PilotConfig::Mode::global_power
                                      ? pilots.pilot_power
                                      : snr_lin * static_cast<double>(N) * pilots.noise_power /
                                            std::real(arma::trace(est.sigma));
                const arma::cx_mat yy =
                    est.pilot_power * est.sigma + pilots.noise_power * arma::eye<arma::cx_mat>(N, N);
                est.W = std::sqrt(est.pilot_power) *
                        arma::solve(yy, est.sigma, arma::solve_opts::likely_sympd).t();
                est.C = std::sqrt(est.pilot_power) * est.W * est.sigma;
                est.Cbar = est.sigma - est.C;
            }
    return bank;
}

// Per-link LMMSE estimation of a channel realization. Draws the despread
// pilot observation y'_mk = sqrt(Ep_mk) h_mk + sqrt(N0) w' per link, which
// is exactly the orthonormal pilot_receive + despread path.
inline arma::cx_mat estimate_channel(const EstimatorBank& bank, const arma::umat& delta,
                                     const arma::cx_mat& H, RngStream& rng)
{
    const arma::uword M = bank.nlos.n_rows, K = bank.nlos.n_cols;
    const arma::uword N = H.n_rows / M;
    if (delta.n_rows != M || delta.n_cols != K || H.n_cols != K || H.n_rows != M * N)
        throw std::invalid_argument("estimate_channel: inconsistent dimensions");

    arma::cx_mat Hhat(M * N, K);
    const double sqrt_n0 = std::sqrt(bank.noise_power);
    for (arma::uword k = 0; k < K; ++k)
        for (arma::uword m = 0; m < M; ++m)
        {
            const LinkEstimator& est = bank.at(m, k, delta(m, k) != 0);
            const arma::span rows(m * N, (m + 1) * N - 1);
            const arma::cx_vec obs = std::sqrt(est.pilot_power) * H(rows, arma::span(k)) +
                                     sqrt_n0 * rng.cnormal_vec(N);
            Hhat(rows, arma::span(k)) = est.W * obs;
        }
    return Hhat;
}

} // namespace cfmimo

#endif

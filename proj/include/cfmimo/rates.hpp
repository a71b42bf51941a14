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
//
// Monte-Carlo side of the rate analysis. Every per-trial quantity any of
// the receivers needs reduces to K x K Gram matrices of the stacked
// channel, its estimate and the noise image, so one draw serves the
// conjugate, joint and MMSE evaluations across a whole SNR grid.

#ifndef cfmimo_rates_H
#define cfmimo_rates_H

#include <armadillo>
#include <cmath>
#include <optional>
#include <vector>

#include "cfmimo/analytics.hpp"
#include "cfmimo/detection.hpp"
#include "cfmimo/parallel.hpp"
#include "cfmimo/stats.hpp"

namespace cfmimo
{

struct TrialGrams
{
    arma::umat delta;    // LoS indicators in effect for this trial
    arma::cx_mat G;      // H^H H
    arma::cx_mat Ghat;   // Hhat^H Hhat (empty without an estimator bank)
    arma::cx_mat Gcross; // Hhat^H H
    arma::cx_vec Hw;     // H^H w, image of the unit-variance noise
    arma::cx_vec Hhatw;  // Hhat^H w
};

// Draws one coherence block: LoS indicators (unless pinned), channel,
// optional LMMSE estimate, and the Gram reductions.
inline TrialGrams draw_trial_grams(const NetworkGeometry& geom, const LinkSet& links,
                                   const EstimatorBank* bank, const arma::umat* fixed_delta,
                                   RngStream& rng)
{
    TrialGrams t;
    t.delta = fixed_delta ? *fixed_delta : draw_los_indicators(links, rng);
    const ChannelRealization ch = draw_channel(geom, links, t.delta, rng);
    const arma::cx_vec w = rng.cnormal_vec(ch.H.n_rows);
    t.G = ch.H.t() * ch.H;
    t.Hw = ch.H.t() * w;
    if (bank)
    {
        const arma::cx_mat Hhat = estimate_channel(*bank, t.delta, ch.H, rng);
        t.Ghat = Hhat.t() * Hhat;
        t.Gcross = Hhat.t() * ch.H;
        t.Hhatw = Hhat.t() * w;
    }
    return t;
}

inline std::vector<TrialGrams> sample_trials(const NetworkGeometry& geom, const LinkSet& links,
                                             const EstimatorBank* bank,
                                             const arma::umat* fixed_delta, std::uint64_t seed,
                                             arma::uword trials, arma::uword threads = 1)
{
    std::vector<TrialGrams> out(trials);
    parallel_for(trials, threads, [&](arma::uword t) {
        RngStream rng(derive_seed(seed, {stream::trial, t}));
        out[t] = draw_trial_grams(geom, links, bank, fixed_delta, rng);
    });
    return out;
}

// Combiner effective gains reconstructed from the Gram reductions; enough
// for SIR/SINR sampling and rate estimation (the r/noise fields stay empty).
inline CombinerOutput conjugate_from_grams(const TrialGrams& t, bool estimated,
                                           double noise_power)
{
    CombinerOutput out;
    if (estimated)
    {
        out.gains = t.Gcross;
        out.gains_est = t.Ghat;
        out.noise_var = noise_power * arma::real(t.Ghat.diag());
    }
    else
    {
        out.gains = t.G;
        out.gains_est = t.G;
        out.noise_var = noise_power * arma::real(t.G.diag());
    }
    out.gains_err = out.gains - out.gains_est;
    return out;
}

inline CombinerOutput mmse_from_grams(const TrialGrams& t, bool estimated, double noise_power,
                                      double regularizer)
{
    const arma::cx_mat& gram_csi = estimated ? t.Ghat : t.G;
    const arma::uword K = gram_csi.n_rows;
    const arma::cx_mat reg = gram_csi + regularizer * arma::eye<arma::cx_mat>(K, K);

    CombinerOutput out;
    out.gains = arma::solve(reg, estimated ? arma::cx_mat(t.Gcross) : arma::cx_mat(t.G),
                            arma::solve_opts::likely_sympd);
    out.gains_est = arma::solve(reg, gram_csi, arma::solve_opts::likely_sympd);
    out.gains_err = out.gains - out.gains_est;
    const arma::cx_mat inner =
        arma::solve(reg, arma::cx_mat(gram_csi * arma::solve(reg, arma::eye<arma::cx_mat>(K, K),
                                                             arma::solve_opts::likely_sympd)),
                    arma::solve_opts::likely_sympd);
    out.noise_var = noise_power * arma::real(inner.diag());
    return out;
}

// ---------------------------------------------------------------------------
// rate series over an SNR grid
// ---------------------------------------------------------------------------

// One series of sum rates (or per-UE rates) across the symbol-power grid.
struct SchemeRates
{
    arma::vec empirical, empirical_se;
    arma::vec upper, upper_se;
    arma::vec lower, lower_se;
    arma::mat per_ue; // K x n_grid empirical per-UE rates
};

inline double clamp_plus(double x) { return x > 0.0 ? x : 0.0; }

inline double log2e() { return std::numbers::log2e; }

// Jensen upper bound and second-order lower bound shared by every
// stream-wise receiver: signal moments against a deterministic denominator.
inline double stream_upper_bound(double second_moment, double es, double denom)
{
    return std::log2(1.0 + second_moment * es / denom);
}

inline double stream_lower_bound(double second_moment, double var_abs_sq, double es, double denom)
{
    if (second_moment <= 0.0 || es <= 0.0)
        return 0.0;
    return clamp_plus(std::log2(second_moment * es) -
                      log2e() * var_abs_sq / (2.0 * second_moment * second_moment) -
                      std::log2(denom));
}

// Conjugate beamforming, accurate or estimated CSI. Closed-form moments fix
// the denominators; the numerator is sampled per trial.
inline SchemeRates conjugate_rates(const MomentEngine& eng, const EstMomentEngine* est_eng,
                                   const std::vector<TrialGrams>& trials, const arma::vec& es_grid,
                                   double noise_power, bool estimated)
{
    const arma::uword K = eng.n_ues();
    const arma::uword T = trials.size();
    const arma::uword G = es_grid.n_elem;
    if (estimated && !est_eng)
        throw std::invalid_argument("conjugate_rates: estimated CSI needs the estimation engine");

    arma::vec second(K), var_abs(K), var_z(K), gtilde(K, arma::fill::zeros);
    arma::mat cross_second(K, K, arma::fill::zeros); // E[|g_kl|^2], l != k
    for (arma::uword k = 0; k < K; ++k)
    {
        if (estimated)
        {
            const EstGkkMoments m = est_eng->gkk(k);
            second[k] = m.second;
            var_abs[k] = m.var_abs_sq;
            gtilde[k] = m.second_gtilde;
            var_z[k] = est_eng->zk_variance(k, noise_power);
            for (arma::uword l = 0; l < K; ++l)
                if (l != k)
                    cross_second(k, l) = est_eng->interference_second(k, l);
        }
        else
        {
            const GkkMoments m = eng.gkk(k);
            second[k] = m.second;
            var_abs[k] = m.var_abs_sq;
            var_z[k] = eng.zk_variance(k, noise_power);
            for (arma::uword l = 0; l < K; ++l)
                if (l != k)
                    cross_second(k, l) = eng.gkl(k, l).second;
        }
    }
    arma::mat interf(K, G);
    for (arma::uword g = 0; g < G; ++g)
        interf.col(g) = arma::sum(cross_second, 1) * es_grid[g];

    // per-trial squared diagonal gains
    arma::mat diag_sq(T, K);
    for (arma::uword t = 0; t < T; ++t)
    {
        const arma::cx_mat& gm = estimated ? trials[t].Ghat : trials[t].G;
        for (arma::uword k = 0; k < K; ++k)
            diag_sq(t, k) = std::norm(gm(k, k));
    }

    SchemeRates out;
    out.empirical.set_size(G);
    out.empirical_se.set_size(G);
    out.upper.set_size(G);
    out.upper_se.zeros(G);
    out.lower.set_size(G);
    out.lower_se.zeros(G);
    out.per_ue.set_size(K, G);

    for (arma::uword g = 0; g < G; ++g)
    {
        const double es = es_grid[g];
        arma::vec sum_rate(T, arma::fill::zeros);
        double up = 0.0, lo = 0.0;
        for (arma::uword k = 0; k < K; ++k)
        {
            const double denom = gtilde[k] * es + interf(k, g) + var_z[k];
            up += stream_upper_bound(second[k], es, denom);
            lo += stream_lower_bound(second[k], var_abs[k], es, denom);
            arma::vec rk = arma::log2(1.0 + diag_sq.col(k) * es / denom);
            out.per_ue(k, g) = arma::mean(rk);
            sum_rate += rk;
        }
        out.empirical[g] = arma::mean(sum_rate);
        out.empirical_se[g] = standard_error(sum_rate);
        out.upper[g] = up;
        out.lower[g] = lo;
    }
    return out;
}

inline double log2_det_hpd(const arma::cx_mat& A)
{
    arma::cx_mat chol;
    if (!arma::chol(chol, A))
        return -std::numeric_limits<double>::infinity();
    return 2.0 * arma::accu(arma::log2(arma::abs(arma::real(chol.diag()))));
}

// Joint (log-det) detection, accurate or estimated CSI. Per Theorem 3 the
// second lower-bound term is evaluated empirically; its standard error is
// the jackknife SE of the sample mean.
inline SchemeRates joint_rates(const MomentEngine& eng, const EstMomentEngine* est_eng,
                               const std::vector<TrialGrams>& trials, const arma::vec& es_grid,
                               double noise_power, bool estimated)
{
    const arma::uword K = eng.n_ues();
    const arma::uword T = trials.size();
    const arma::uword G = es_grid.n_elem;
    if (estimated && !est_eng)
        throw std::invalid_argument("joint_rates: estimated CSI needs the estimation engine");

    const arma::cx_mat mean_G = estimated ? est_eng->mean_Ghat() : eng.mean_G();
    const double log2det_meanG = log2_det_hpd(mean_G);

    arma::vec logdet_G(T);
    for (arma::uword t = 0; t < T; ++t)
        logdet_G[t] = log2_det_hpd(estimated ? trials[t].Ghat : trials[t].G);

    SchemeRates out;
    out.empirical.set_size(G);
    out.empirical_se.set_size(G);
    out.upper.set_size(G);
    out.upper_se.zeros(G);
    out.lower.set_size(G);
    out.lower_se.set_size(G);
    out.per_ue.zeros(K, G);

    for (arma::uword g = 0; g < G; ++g)
    {
        const double es = es_grid[g];
        const double denom =
            estimated ? est_eng->sigma_y_sq(arma::vec(K, arma::fill::value(es))) : noise_power;
        const double scale = es / denom;
        if (scale <= 0.0)
        {
            out.empirical[g] = out.empirical_se[g] = 0.0;
            out.upper[g] = out.lower[g] = out.lower_se[g] = 0.0;
            continue;
        }
        arma::vec emp(T);
        for (arma::uword t = 0; t < T; ++t)
        {
            const arma::cx_mat& gm = estimated ? trials[t].Ghat : trials[t].G;
            emp[t] = log2_det_hpd(arma::cx_mat(arma::eye<arma::cx_mat>(K, K) + scale * gm));
        }
        out.empirical[g] = arma::mean(emp);
        out.empirical_se[g] = standard_error(emp);
        out.upper[g] = log2_det_hpd(
            arma::cx_mat(arma::eye<arma::cx_mat>(K, K) + scale * mean_G));

        // log2 det(diag(es) E[G]) + E[log2 det Psi], Psi = E[G]^-1 G
        if (!std::isfinite(log2det_meanG))
        {
            out.lower[g] = 0.0; // singular E[G]: clamp and flag via zero
            out.lower_se[g] = 0.0;
            continue;
        }
        const double base = static_cast<double>(K) * std::log2(scale) + log2det_meanG;
        arma::vec psi_term = logdet_G - log2det_meanG;
        const double lo = base + arma::mean(psi_term);
        out.lower[g] = clamp_plus(lo);
        out.lower_se[g] = jackknife_se_of_mean(psi_term);
    }
    return out;
}

// Joint-detection approximation that drops the empirical Psi term.
inline arma::vec joint_rate_approx(const MomentEngine& eng, const EstMomentEngine* est_eng,
                                   const arma::vec& es_grid, double noise_power, bool estimated)
{
    const arma::uword K = eng.n_ues();
    const arma::cx_mat mean_G = estimated ? est_eng->mean_Ghat() : eng.mean_G();
    const double log2det_meanG = log2_det_hpd(mean_G);
    arma::vec out(es_grid.n_elem);
    for (arma::uword g = 0; g < es_grid.n_elem; ++g)
    {
        const double denom =
            estimated ? est_eng->sigma_y_sq(arma::vec(K, arma::fill::value(es_grid[g])))
                      : noise_power;
        const double scale = es_grid[g] / denom;
        out[g] = (scale > 0.0 && std::isfinite(log2det_meanG))
                     ? clamp_plus(static_cast<double>(K) * std::log2(scale) + log2det_meanG)
                     : 0.0;
    }
    return out;
}

// Centralized MMSE combining. No closed-form gain statistics exist, so both
// the bounds and the rate denominators substitute empirical moments of the
// effective gains; bound standard errors come from a leave-one-out jackknife.
struct MmseRateOptions
{
    bool estimated = false;
    double psi_override = 0.0; // 0 -> noise power (accurate) or the default formula (estimated)
};

inline SchemeRates mmse_rates(const std::vector<TrialGrams>& trials, const arma::vec& es_grid,
                              double noise_power, const EstMomentEngine* est_eng,
                              const MmseRateOptions& opt = {})
{
    const arma::uword T = trials.size();
    if (T == 0)
        throw std::invalid_argument("mmse_rates: need at least one trial");
    const arma::uword K = (opt.estimated ? trials[0].Ghat : trials[0].G).n_rows;
    const arma::uword G = es_grid.n_elem;
    if (opt.estimated && !est_eng && opt.psi_override <= 0.0)
        throw std::invalid_argument("mmse_rates: estimated CSI needs the estimation engine");

    SchemeRates out;
    out.empirical.set_size(G);
    out.empirical_se.set_size(G);
    out.upper.set_size(G);
    out.upper_se.set_size(G);
    out.lower.set_size(G);
    out.lower_se.set_size(G);
    out.per_ue.set_size(K, G);

    for (arma::uword g = 0; g < G; ++g)
    {
        const double es = es_grid[g];
        double psi = opt.psi_override;
        if (psi <= 0.0)
        {
            psi = noise_power;
            if (opt.estimated)
            {
                // psi = N0 + sum_k Es_k tr(Cbar_k) / (MN)
                const arma::uword mn = est_eng->bank().nlos.n_rows *
                                       est_eng->bank().nlos(0, 0).sigma.n_rows;
                double err = 0.0;
                for (arma::uword k = 0; k < K; ++k)
                    err += es * est_eng->mean_error_power(k);
                psi += err / static_cast<double>(mn);
            }
        }

        // per-trial gain samples at this regularizer
        arma::mat fkk_sq(T, K), fkk_4(T, K), interf(T, K), err_leak(T, K), nvar(T, K);
        for (arma::uword t = 0; t < T; ++t)
        {
            const CombinerOutput c = mmse_from_grams(trials[t], opt.estimated, noise_power, psi);
            for (arma::uword k = 0; k < K; ++k)
            {
                const double s = std::norm(c.gains_est(k, k));
                fkk_sq(t, k) = s;
                fkk_4(t, k) = s * s;
                double acc = 0.0;
                for (arma::uword l = 0; l < K; ++l)
                    if (l != k)
                        acc += std::norm(opt.estimated ? c.gains_est(k, l) : c.gains(k, l));
                interf(t, k) = acc;
                double leak = 0.0;
                if (opt.estimated)
                    for (arma::uword l = 0; l < K; ++l)
                        leak += std::norm(c.gains_err(k, l));
                err_leak(t, k) = leak;
                nvar(t, k) = c.noise_var[k];
            }
        }

        const arma::rowvec m_fkk_sq = arma::mean(fkk_sq, 0);
        const arma::rowvec m_fkk_4 = arma::mean(fkk_4, 0);
        const arma::rowvec m_interf = arma::mean(interf, 0);
        const arma::rowvec m_leak = arma::mean(err_leak, 0);
        const arma::rowvec m_nvar = arma::mean(nvar, 0);

        arma::vec sum_rate(T, arma::fill::zeros);
        double up = 0.0, lo = 0.0;
        for (arma::uword k = 0; k < K; ++k)
        {
            const double denom = m_interf[k] * es + m_leak[k] * es + m_nvar[k];
            const double var_abs = m_fkk_4[k] - m_fkk_sq[k] * m_fkk_sq[k];
            up += stream_upper_bound(m_fkk_sq[k], es, denom);
            lo += stream_lower_bound(m_fkk_sq[k], clamp_plus(var_abs), es, denom);
            arma::vec rk = arma::log2(1.0 + fkk_sq.col(k) * es / denom);
            out.per_ue(k, g) = arma::mean(rk);
            sum_rate += rk;
        }
        out.empirical[g] = arma::mean(sum_rate);
        out.empirical_se[g] = standard_error(sum_rate);
        out.upper[g] = up;
        out.lower[g] = lo;

        // jackknife over trials of the whole bound formulas
        std::vector<arma::vec> samples;
        samples.reserve(3 * K);
        for (arma::uword k = 0; k < K; ++k)
        {
            samples.push_back(fkk_sq.col(k));
            samples.push_back(fkk_4.col(k));
            samples.push_back(interf.col(k) * es + err_leak.col(k) * es + nvar.col(k));
        }
        auto bound_stat = [&](bool upper_bound) {
            return [&, upper_bound](const arma::vec& loo) {
                double acc = 0.0;
                for (arma::uword k = 0; k < K; ++k)
                {
                    const double s2 = loo[3 * k + 0];
                    const double s4 = loo[3 * k + 1];
                    const double dn = loo[3 * k + 2];
                    acc += upper_bound
                               ? stream_upper_bound(s2, es, dn)
                               : stream_lower_bound(s2, clamp_plus(s4 - s2 * s2), es, dn);
                }
                return acc;
            };
        };
        out.upper_se[g] = jackknife_se(samples, bound_stat(true));
        out.lower_se[g] = jackknife_se(samples, bound_stat(false));
    }
    return out;
}

// Per-UE or sum empirical rate for one scheme/CSI mode; thin wrapper kept
// close to the shape the experiment drivers consume.
enum class Scheme
{
    conjugate,
    joint,
    mmse
};

inline Scheme scheme_from_string(const std::string& s)
{
    if (s == "conjugate")
        return Scheme::conjugate;
    if (s == "joint")
        return Scheme::joint;
    if (s == "mmse")
        return Scheme::mmse;
    throw std::invalid_argument("unknown scheme: " + s);
}

inline SchemeRates empirical_rate(const MomentEngine& eng, const EstMomentEngine* est_eng,
                                  const std::vector<TrialGrams>& trials, Scheme scheme,
                                  bool estimated, const arma::vec& es_grid, double noise_power,
                                  const MmseRateOptions& mmse_opt = {})
{
    switch (scheme)
    {
        case Scheme::conjugate:
            return conjugate_rates(eng, est_eng, trials, es_grid, noise_power, estimated);
        case Scheme::joint:
            return joint_rates(eng, est_eng, trials, es_grid, noise_power, estimated);
        case Scheme::mmse:
        {
            MmseRateOptions o = mmse_opt;
            o.estimated = estimated;
            return mmse_rates(trials, es_grid, noise_power, est_eng, o);
        }
    }
    throw std::logic_error("unreachable");
}

} // namespace cfmimo

#endif

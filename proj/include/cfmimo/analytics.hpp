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
// Closed-form statistics of the conjugate-beamforming effective channel
// g = H^H H (diagonal g_kk, off-diagonal g_kl), of the CPU-side noise term
// z_k, and of the effective channel under LMMSE-estimated CSI.
//
// Two variants exist side by side wherever the published expressions are
// not self-consistent:
//   * the default (used by every rate bound) is derived from the exact
//     per-link mixture distribution and is pinned against brute-force
//     Monte-Carlo oracles in the test suite;
//   * the *_published fields evaluate the printed expressions verbatim so
//     both numbers can be reported next to the oracle value.

#ifndef cfmimo_analytics_H
#define cfmimo_analytics_H

#include <armadillo>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "cfmimo/estimation.hpp"
#include "cfmimo/geometry.hpp"

namespace cfmimo
{

// ---------------------------------------------------------------------------
// small moment/cumulant helpers (orders 1..4)
// ---------------------------------------------------------------------------

struct Moments4
{
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
};

struct Cumulants4
{
    double k1 = 0, k2 = 0, k3 = 0, k4 = 0;

    Cumulants4& operator+=(const Cumulants4& o)
    {
        k1 += o.k1;
        k2 += o.k2;
        k3 += o.k3;
        k4 += o.k4;
        return *this;
    }
};

inline Cumulants4 cumulants_from_moments(const Moments4& m)
{
    Cumulants4 c;
    c.k1 = m.m1;
    c.k2 = m.m2 - m.m1 * m.m1;
    c.k3 = m.m3 - 3.0 * m.m1 * m.m2 + 2.0 * std::pow(m.m1, 3);
    c.k4 = m.m4 - 4.0 * m.m1 * m.m3 - 3.0 * m.m2 * m.m2 + 12.0 * m.m1 * m.m1 * m.m2 -
           6.0 * std::pow(m.m1, 4);
    return c;
}

inline Moments4 moments_from_cumulants(const Cumulants4& c)
{
    Moments4 m;
    m.m1 = c.k1;
    m.m2 = c.k2 + c.k1 * c.k1;
    m.m3 = c.k3 + 3.0 * c.k2 * c.k1 + std::pow(c.k1, 3);
    m.m4 = c.k4 + 4.0 * c.k3 * c.k1 + 3.0 * c.k2 * c.k2 + 6.0 * c.k2 * c.k1 * c.k1 +
           std::pow(c.k1, 4);
    return m;
}

inline Moments4 mix_moments(const Moments4& a, const Moments4& b, double p)
{
    Moments4 m;
    m.m1 = p * a.m1 + (1.0 - p) * b.m1;
    m.m2 = p * a.m2 + (1.0 - p) * b.m2;
    m.m3 = p * a.m3 + (1.0 - p) * b.m3;
    m.m4 = p * a.m4 + (1.0 - p) * b.m4;
    return m;
}

// E[Q^r] for Q ~ Gamma(shape, 1); a zero shape is the point mass at 0.
inline double gamma_raw_moment(double shape, int order)
{
    if (shape <= 0.0)
        return order == 0 ? 1.0 : 0.0;
    double v = 1.0;
    for (int i = 0; i < order; ++i)
        v *= shape + static_cast<double>(i);
    return v;
}

// E[x^p] for x ~ N(0, 1/2): zero for odd p, (p-1)!! / 2^(p/2) for even p.
inline double half_gaussian_moment(int p)
{
    if (p % 2 != 0)
        return 0.0;
    double v = 1.0;
    for (int i = p - 1; i > 1; i -= 2)
        v *= static_cast<double>(i);
    return v / std::pow(2.0, p / 2);
}

// ---------------------------------------------------------------------------
// per-link distribution of the squared channel norm
// ---------------------------------------------------------------------------

// Raw moments (orders 1..4) of T = ||h_mk||^2 for one link, where
//   T | delta=1  =  A + beta*(x^2 + y^2 + W) + 2*sqrt(beta*A)*x,
//   T | delta=0  =  beta * Gamma(N, 1),
// with A = N*a the total LoS power, x,y ~ N(0,1/2) and W ~ Gamma(N-1,1)
// the steering-aligned decomposition of the Rayleigh part.
inline Moments4 link_gain_sq_moments(double los_pow, double beta, double p_los, arma::uword N)
{
    const double A = static_cast<double>(N) * los_pow;
    const double b = 2.0 * std::sqrt(beta * A);

    // moments of S1 = A + beta*x^2 + b*x
    double s1[5];
    for (int r = 0; r <= 4; ++r)
    {
        double acc = 0.0;
        for (int i1 = 0; i1 <= r; ++i1)
            for (int i2 = 0; i1 + i2 <= r; ++i2)
            {
                const int i3 = r - i1 - i2;
                double coef = 1.0; // multinomial r! / (i1! i2! i3!)
                {
                    auto fact = [](int n) {
                        double f = 1.0;
                        for (int j = 2; j <= n; ++j)
                            f *= j;
                        return f;
                    };
                    coef = fact(r) / (fact(i1) * fact(i2) * fact(i3));
                }
                acc += coef * std::pow(A, i1) * std::pow(beta, i2) * std::pow(b, i3) *
                       half_gaussian_moment(2 * i2 + i3);
            }
        s1[r] = acc;
    }
    // moments of S2 = beta*y^2 and S3 = beta*W
    double s2[5], s3[5];
    for (int r = 0; r <= 4; ++r)
    {
        s2[r] = std::pow(beta, r) * half_gaussian_moment(2 * r);
        s3[r] = std::pow(beta, r) * gamma_raw_moment(static_cast<double>(N) - 1.0, r);
    }

    Moments4 los;
    double* out[4] = {&los.m1, &los.m2, &los.m3, &los.m4};
    for (int r = 1; r <= 4; ++r)
    {
        double acc = 0.0;
        for (int i = 0; i <= r; ++i)
            for (int j = 0; i + j <= r; ++j)
            {
                const int l = r - i - j;
                auto fact = [](int n) {
                    double f = 1.0;
                    for (int q = 2; q <= n; ++q)
                        f *= q;
                    return f;
                };
                acc += fact(r) / (fact(i) * fact(j) * fact(l)) * s1[i] * s2[j] * s3[l];
            }
        *out[r - 1] = acc;
    }

    Moments4 nlos;
    nlos.m1 = beta * gamma_raw_moment(static_cast<double>(N), 1);
    nlos.m2 = beta * beta * gamma_raw_moment(static_cast<double>(N), 2);
    nlos.m3 = std::pow(beta, 3) * gamma_raw_moment(static_cast<double>(N), 3);
    nlos.m4 = std::pow(beta, 4) * gamma_raw_moment(static_cast<double>(N), 4);

    return mix_moments(los, nlos, p_los);
}

// Raw moments of the noncentral quadratic form Q = ||v||^2, v ~ CN(mean, cov),
// from the cumulants k_j = (j-1)! tr(cov^j) + j! mean^H cov^(j-1) mean.
inline Moments4 quadratic_form_moments(const arma::cx_vec& mean, const arma::cx_mat& cov)
{
    Cumulants4 c;
    arma::cx_mat power = cov;
    const double fact[5] = {1.0, 1.0, 2.0, 6.0, 24.0};
    double* ks[4] = {&c.k1, &c.k2, &c.k3, &c.k4};
    arma::cx_vec cov_mean = mean;
    for (int j = 1; j <= 4; ++j)
    {
        *ks[j - 1] = fact[j - 1] * std::real(arma::trace(power)) +
                     fact[j] * std::real(arma::cdot(mean, cov_mean));
        if (j < 4)
        {
            power = power * cov;
            cov_mean = cov * cov_mean;
        }
    }
    return moments_from_cumulants(c);
}

// ---------------------------------------------------------------------------
// sums over distinct index tuples (used by the published expressions)
// ---------------------------------------------------------------------------

inline double sum_distinct2(const arma::vec& f, const arma::vec& g)
{
    return arma::accu(f) * arma::accu(g) - arma::accu(f % g);
}

inline double sum_distinct3(const arma::vec& f, const arma::vec& g, const arma::vec& h)
{
    const double sf = arma::accu(f), sg = arma::accu(g), sh = arma::accu(h);
    return sf * sg * sh - sf * arma::accu(g % h) - sg * arma::accu(f % h) -
           sh * arma::accu(f % g) + 2.0 * arma::accu(f % g % h);
}

// ordered 4-tuples of pairwise-distinct indices, identical weight
inline double sum_distinct4(const arma::vec& u)
{
    const double p1 = arma::accu(u);
    const double p2 = arma::accu(arma::pow(u, 2));
    const double p3 = arma::accu(arma::pow(u, 3));
    const double p4 = arma::accu(arma::pow(u, 4));
    return std::pow(p1, 4) - 6.0 * p1 * p1 * p2 + 3.0 * p2 * p2 + 8.0 * p1 * p3 - 6.0 * p4;
}

// ---------------------------------------------------------------------------
// moment engine
// ---------------------------------------------------------------------------

struct GkkMoments
{
    double mean = 0;       // E[g_kk]
    double second = 0;     // E[g_kk^2]
    double variance = 0;   // var(g_kk)
    double fourth = 0;     // E[g_kk^4]
    double var_abs_sq = 0; // var(g_kk^2), drives the lower-bound correction

    double second_published = 0; // verbatim Lemma-1 expression
    double fourth_published = 0; // verbatim appendix expression
};

struct GklMoments
{
    std::complex<double> mean; // E[g_kl]
    double second = 0;         // E[|g_kl|^2]
    double variance = 0;       // E[|g_kl - E g_kl|^2]

    std::complex<double> second_published; // verbatim expression (complex as printed)
    std::complex<double> var_published;    // verbatim expression (complex as printed)
};

class MomentEngine
{
  public:
    MomentEngine(const NetworkGeometry& geom, const LinkSet& links)
        : geom_(&geom), links_(&links), n_(geom.n_antennas)
    {
        const arma::uword M = geom.n_aps(), K = geom.n_ues();
        a_.set_size(M, K);
        for (arma::uword k = 0; k < K; ++k)
            for (arma::uword m = 0; m < M; ++m)
                a_(m, k) = los_power(geom, links, m, k);
    }

    const NetworkGeometry& geom() const { return *geom_; }
    const LinkSet& links() const { return *links_; }
    arma::uword n_ues() const { return links_->n_ues(); }
    double los_pow(arma::uword m, arma::uword k) const { return a_(m, k); }

    GkkMoments gkk(arma::uword k) const
    {
        const arma::uword M = links_->n_aps();
        const double N = static_cast<double>(n_);
        const arma::vec a = a_.col(k);
        const arma::vec P = links_->los_prob.col(k);
        const arma::vec B = links_->pathloss.col(k);

        GkkMoments g;
        Cumulants4 total;
        for (arma::uword m = 0; m < M; ++m)
            total += cumulants_from_moments(link_gain_sq_moments(a[m], B[m], P[m], n_));
        const Moments4 mom = moments_from_cumulants(total);
        g.mean = mom.m1;
        g.second = mom.m2;
        g.variance = mom.m2 - mom.m1 * mom.m1;
        g.fourth = mom.m4;
        g.var_abs_sq = mom.m4 - mom.m2 * mom.m2;

        // Lemma-1 second moment as published.
        g.second_published = N * N * (arma::accu(P % arma::square(a)) + sum_distinct2(P % a, P % a)) +
                             N * arma::accu(arma::square(B)) + 4.0 * N * arma::accu(P % B % a);
        g.fourth_published = fourth_published(a, P, B);
        return g;
    }

    GklMoments gkl(arma::uword k, arma::uword l) const
    {
        if (k == l)
            throw std::invalid_argument("gkl moments need two distinct UEs");
        const arma::uword M = links_->n_aps();
        const double N = static_cast<double>(n_);
        GklMoments g;

        std::complex<double> mean{}, mean_pub{}, var_pub_los{};
        double var_sum = 0.0;
        for (arma::uword m = 0; m < M; ++m)
        {
            const double pk = links_->los_prob(m, k), pl = links_->los_prob(m, l);
            const double bk = links_->pathloss(m, k), bl = links_->pathloss(m, l);
            const std::complex<double> c = los_inner(m, k, l);
            mean += pk * pl * c;
            var_sum += pk * pl * (1.0 - pk * pl) * std::norm(c) + N * bk * bl +
                       N * (pk * bl * a_(m, k) + pl * bk * a_(m, l));

            const std::complex<double> c_pub = los_inner_published(m, k, l);
            mean_pub += pk * pl * c_pub;
            var_pub_los += pk * (1.0 - pk) * pl * (1.0 - pl) * c_pub;
        }
        g.mean = mean;
        g.variance = var_sum;
        g.second = var_sum + std::norm(mean);

        double nlos_pub = 0.0, cross_pub = 0.0;
        for (arma::uword m = 0; m < M; ++m)
        {
            nlos_pub += links_->pathloss(m, k) * links_->pathloss(m, l);
            cross_pub += links_->los_prob(m, k) * links_->pathloss(m, l) * a_(m, k);
        }
        g.second_published = mean_pub + N * nlos_pub + 4.0 * N * cross_pub;
        g.var_published = var_pub_los + N * nlos_pub + 4.0 * N * cross_pub;
        return g;
    }

    // var(z_k) = N0 * N * sum_m (P_mk a_mk + beta_mk) = N0 * E[g_kk]
    double zk_variance(arma::uword k, double noise_power) const
    {
        const double N = static_cast<double>(n_);
        return noise_power * N *
               arma::accu(links_->los_prob.col(k) % a_.col(k) + links_->pathloss.col(k));
    }

    // sum_{l != k} E[|g_kl|^2] E_s,l, the interference floor of stream k
    double interference_floor(arma::uword k, const arma::vec& symbol_powers) const
    {
        double acc = 0.0;
        for (arma::uword l = 0; l < n_ues(); ++l)
            if (l != k)
                acc += gkl(k, l).second * symbol_powers[l];
        return acc;
    }

    // E[G] for the joint-detection bounds (K x K, Hermitian)
    arma::cx_mat mean_G() const
    {
        const arma::uword K = n_ues();
        arma::cx_mat eg(K, K);
        for (arma::uword k = 0; k < K; ++k)
        {
            eg(k, k) = gkk(k).mean;
            for (arma::uword l = k + 1; l < K; ++l)
            {
                const std::complex<double> v = gkl(k, l).mean;
                eg(k, l) = v;
                eg(l, k) = std::conj(v);
            }
        }
        return eg;
    }

  private:
    // h_bar_mk^H h_bar_ml through the steering phase sum
    std::complex<double> los_inner(arma::uword m, arma::uword k, arma::uword l) const
    {
        const double lam = geom_->carrier_wavelength_m;
        const double mag = std::sqrt(a_(m, k) * a_(m, l));
        const double phase = 2.0 * std::numbers::pi / lam *
                             (links_->dist3d_m(m, l) - links_->dist3d_m(m, k));
        const double step = 2.0 * std::numbers::pi * geom_->antenna_spacing_m / lam *
                            (std::sin(links_->aoa_rad(m, l)) - std::sin(links_->aoa_rad(m, k)));
        std::complex<double> s{};
        for (arma::uword i = 0; i < n_; ++i)
            s += std::polar(1.0, step * static_cast<double>(i));
        return mag * std::polar(1.0, phase) * s;
    }

    // same quantity with the conventions exactly as published (conjugated
    // phases, antenna index running 1..N)
    std::complex<double> los_inner_published(arma::uword m, arma::uword k, arma::uword l) const
    {
        const double lam = geom_->carrier_wavelength_m;
        const double mag = std::sqrt(a_(m, k) * a_(m, l));
        const double phase = 2.0 * std::numbers::pi / lam *
                             (links_->dist3d_m(m, k) - links_->dist3d_m(m, l));
        const double step = 2.0 * std::numbers::pi * geom_->antenna_spacing_m / lam *
                            (std::sin(links_->aoa_rad(m, k)) - std::sin(links_->aoa_rad(m, l)));
        std::complex<double> s{};
        for (arma::uword i = 1; i <= n_; ++i)
            s += std::polar(1.0, step * static_cast<double>(i));
        return mag * std::polar(1.0, phase) * s;
    }

    // Appendix fourth moment of g_kk, evaluated verbatim. Sums over
    // distinct-index tuples follow the printed index sets; the pairs the
    // appendix leaves unstated, (1,2) and (1,3), enter as products of the
    // printed second moments.
    double fourth_published(const arma::vec& a, const arma::vec& P, const arma::vec& B) const
    {
        const double N = static_cast<double>(n_);
        const arma::vec ap = a % P;

        const double e_g1 = N * arma::accu(ap);
        const double e_g2 = N * arma::accu(B);
        const double e_g1_sq = N * N * (arma::accu(P % arma::square(a)) + sum_distinct2(ap, ap));
        const double e_g2_sq =
            N * arma::accu(arma::square(B)) + N * N * std::pow(arma::accu(B), 2);
        const double e_g3_sq = 2.0 * N * arma::accu(P % B % a);

        const double g1_4 =
            std::pow(N, 4) *
            (sum_distinct4(ap) + 6.0 * arma::accu(arma::pow(a, 4) % P) +
             sum_distinct3(arma::square(a) % P, ap, ap) +
             2.0 * sum_distinct3(arma::square(a) % P, ap, ap) +
             3.0 * sum_distinct3(arma::square(a) % P, ap, ap) +
             2.0 * (sum_distinct2(arma::square(a) % P, arma::square(a) % P) +
                    sum_distinct2(ap, arma::pow(a, 3) % P) +
                    sum_distinct2(arma::pow(a, 3) % P, ap)) +
             2.0 * sum_distinct2(arma::pow(a, 3), a) +
             sum_distinct2(arma::square(a) % P, arma::square(a) % P) +
             2.0 * sum_distinct2(arma::pow(a, 3) % P, ap));
        const double g2_4 = std::pow(arma::accu(B), 4) * N *
                            (std::pow(N, 3) + 12.0 * N * N + 104.0 * N + 513.0);
        const double g3_4 =
            N * N *
            (18.0 * arma::accu(arma::square(a) % arma::square(B) % P) +
             2.0 * sum_distinct2(ap % B, ap % B) + sum_distinct2(ap % B, ap % B));
        const double g1_3 = std::pow(N, 3) * (sum_distinct3(ap, ap, ap) +
                                              2.0 * arma::accu(arma::pow(a, 3) % P) +
                                              2.0 * sum_distinct2(ap, arma::square(a) % P));
        const double g2_3 =
            std::pow(arma::accu(B), 3) * N * (N * N + 3.0 * N + 26.0);
        const double g2sq_g3sq =
            2.0 * N * arma::accu(B % a % P) *
            (sum_distinct2(B, B) * N * (N - 1.0) + N * std::pow(arma::accu(B), 2) +
             arma::accu(arma::square(B)) * N * (N - 1.0) +
             3.0 * N * arma::accu(arma::square(B)));
        const double g3sq_g2 =
            0.25 * (N * N * arma::accu(B) * arma::accu(B % a % P) +
                    N * sum_distinct2(B, B % a % P) +
                    3.0 * N * arma::accu(arma::pow(B, 3) % a % P));

        return g1_4 + g2_4 + g3_4 +
               6.0 * (2.0 * e_g1_sq * e_g2_sq + 2.0 * e_g1_sq * e_g3_sq + 2.0 * g2sq_g3sq) +
               4.0 * g1_3 * e_g2 + 4.0 * g2_3 * e_g1 + 12.0 * g3sq_g2 * e_g1;
    }

    const NetworkGeometry* geom_;
    const LinkSet* links_;
    arma::uword n_;
    arma::mat a_; // M x K per-antenna LoS power a_mk
};

// ---------------------------------------------------------------------------
// effective-channel statistics under estimated CSI
// ---------------------------------------------------------------------------

struct EstGkkMoments
{
    double mean = 0;          // E[ghat_kk], ghat_kk = ||hhat_k||^2
    double second = 0;        // E[ghat_kk^2]
    double fourth = 0;        // E[ghat_kk^4]
    double var_abs_sq = 0;    // var(ghat_kk^2)
    double second_gtilde = 0; // E[|gtilde_kk|^2], leakage through the estimation error

    double mean_published = 0;   // appendix expression, verbatim
    double second_published = 0; // appendix expression, verbatim
};

class EstMomentEngine
{
  public:
    EstMomentEngine(const NetworkGeometry& geom, const LinkSet& links, const EstimatorBank& bank)
        : geom_(&geom), links_(&links), bank_(&bank), n_(geom.n_antennas)
    {
        const arma::uword M = geom.n_aps(), K = geom.n_ues();
        mean_los_.set_size(M, K);
        cov_los_.set_size(M, K);
        for (arma::uword k = 0; k < K; ++k)
            for (arma::uword m = 0; m < M; ++m)
            {
                const LinkEstimator& est = bank.los(m, k);
                const arma::cx_vec hbar = los_channel(geom, links, m, k);
                mean_los_(m, k) = std::sqrt(est.pilot_power) * est.W * hbar;
                cov_los_(m, k) = (est.pilot_power * links.pathloss(m, k) + bank.noise_power) *
                                 est.W * est.W.t();
            }
    }

    const EstimatorBank& bank() const { return *bank_; }

    EstGkkMoments gkk(arma::uword k) const
    {
        const arma::uword M = links_->n_aps();
        EstGkkMoments g;
        Cumulants4 total;
        for (arma::uword m = 0; m < M; ++m)
        {
            const double p = links_->los_prob(m, k);
            const Moments4 los = quadratic_form_moments(mean_los_(m, k), cov_los_(m, k));
            const double c0 = nlos_estimate_gain(m, k);
            Moments4 nlos;
            nlos.m1 = c0 * gamma_raw_moment(static_cast<double>(n_), 1);
            nlos.m2 = c0 * c0 * gamma_raw_moment(static_cast<double>(n_), 2);
            nlos.m3 = std::pow(c0, 3) * gamma_raw_moment(static_cast<double>(n_), 3);
            nlos.m4 = std::pow(c0, 4) * gamma_raw_moment(static_cast<double>(n_), 4);
            total += cumulants_from_moments(mix_moments(los, nlos, p));

            const LinkEstimator& e1 = bank_->los(m, k);
            const LinkEstimator& e0 = bank_->nlos(m, k);
            g.second_gtilde += p * std::real(arma::trace(e1.Cbar * e1.C)) +
                               (1.0 - p) * std::real(arma::trace(e0.Cbar * e0.C));
        }
        const Moments4 mom = moments_from_cumulants(total);
        g.mean = mom.m1;
        g.second = mom.m2;
        g.fourth = mom.m4;
        g.var_abs_sq = mom.m4 - mom.m2 * mom.m2;

        published_gkk(k, g);
        return g;
    }

    // E[ghat_kl] = sum_m P_mk P_ml mu_mk^H mu_ml for E[Ghat] off-diagonals
    std::complex<double> mean_ghat_kl(arma::uword k, arma::uword l) const
    {
        std::complex<double> acc{};
        for (arma::uword m = 0; m < links_->n_aps(); ++m)
            acc += links_->los_prob(m, k) * links_->los_prob(m, l) *
                   arma::cdot(mean_los_(m, k), mean_los_(m, l));
        return acc;
    }

    arma::cx_mat mean_Ghat() const
    {
        const arma::uword K = links_->n_ues();
        arma::cx_mat eg(K, K);
        for (arma::uword k = 0; k < K; ++k)
        {
            eg(k, k) = gkk(k).mean;
            for (arma::uword l = k + 1; l < K; ++l)
            {
                const std::complex<double> v = mean_ghat_kl(k, l);
                eg(k, l) = v;
                eg(l, k) = std::conj(v);
            }
        }
        return eg;
    }

    // E[|hhat_k^H h_l|^2] for l != k: the interference moment entering the
    // estimated-CSI stream rate.
    double interference_second(arma::uword k, arma::uword l) const
    {
        if (k == l)
            throw std::invalid_argument("interference moment needs two distinct UEs");
        double acc = 0.0;
        std::complex<double> mean_acc{};
        for (arma::uword m = 0; m < links_->n_aps(); ++m)
        {
            const double pk = links_->los_prob(m, k), pl = links_->los_prob(m, l);
            double second = 0.0;
            for (int dk = 0; dk < 2; ++dk)
                for (int dl = 0; dl < 2; ++dl)
                {
                    const double w = (dk ? pk : 1.0 - pk) * (dl ? pl : 1.0 - pl);
                    if (w == 0.0)
                        continue;
                    const arma::cx_mat& c = bank_->at(m, k, dk != 0).C;
                    second += w * std::real(arma::trace(
                                      arma::cx_mat(sigma_hh(*geom_, *links_, m, l, dl != 0) * c)));
                }
            const std::complex<double> mean_m =
                pk * pl * arma::cdot(mean_los_(m, k), los_channel(*geom_, *links_, m, l));
            acc += second - std::norm(mean_m);
            mean_acc += mean_m;
        }
        return acc + std::norm(mean_acc);
    }

    double interference_floor(arma::uword k, const arma::vec& symbol_powers) const
    {
        double acc = 0.0;
        for (arma::uword l = 0; l < links_->n_ues(); ++l)
            if (l != k)
                acc += interference_second(k, l) * symbol_powers[l];
        return acc;
    }

    // var(z_k) with the estimate as combiner: N0 E[||hhat_k||^2]
    double zk_variance(arma::uword k, double noise_power) const
    {
        double acc = 0.0;
        for (arma::uword m = 0; m < links_->n_aps(); ++m)
        {
            const double p = links_->los_prob(m, k);
            acc += p * std::real(arma::trace(bank_->los(m, k).C)) +
                   (1.0 - p) * std::real(arma::trace(bank_->nlos(m, k).C));
        }
        return noise_power * acc;
    }

    // mean estimation-error power tr(Cbar_k) = sum_m E_delta[tr Cbar_mk]
    double mean_error_power(arma::uword k) const
    {
        double acc = 0.0;
        for (arma::uword m = 0; m < links_->n_aps(); ++m)
        {
            const double p = links_->los_prob(m, k);
            acc += p * std::real(arma::trace(bank_->los(m, k).Cbar)) +
                   (1.0 - p) * std::real(arma::trace(bank_->nlos(m, k).Cbar));
        }
        return acc;
    }

    // total noise-plus-estimation-error power of the joint observation
    double sigma_y_sq(const arma::vec& symbol_powers) const
    {
        double acc = bank_->noise_power;
        for (arma::uword k = 0; k < links_->n_ues(); ++k)
            acc += symbol_powers[k] * mean_error_power(k);
        return acc;
    }

    // E[C_mk^(1/2)]: LoS branch through the PSD square root, NLoS branch the
    // scalar (beta Ep / (beta Ep + N0))^(1/2) I. `published` keeps the
    // unrooted scalar exactly as printed.
    arma::cx_mat mean_sqrt_C(arma::uword m, arma::uword k, bool published = false) const
    {
        const double p = links_->los_prob(m, k);
        const LinkEstimator& e1 = bank_->los(m, k);
        const LinkEstimator& e0 = bank_->nlos(m, k);
        const double beta = links_->pathloss(m, k);
        const double ratio = beta * e0.pilot_power / (beta * e0.pilot_power + bank_->noise_power);
        const double scalar = published ? ratio : std::sqrt(ratio);
        return p * psd_sqrt(e1.C) +
               (1.0 - p) * scalar * arma::eye<arma::cx_mat>(e1.C.n_rows, e1.C.n_cols);
    }

  private:
    double nlos_estimate_gain(arma::uword m, arma::uword k) const
    {
        // C | delta=0 = Ep beta^2 / (Ep beta + N0) I; the norm of the
        // estimate is that scalar times a Gamma(N,1) draw.
        const double beta = links_->pathloss(m, k);
        const double ep = bank_->nlos(m, k).pilot_power;
        return ep * beta * beta / (ep * beta + bank_->noise_power);
    }

    void published_gkk(arma::uword k, EstGkkMoments& g) const
    {
        const arma::uword M = links_->n_aps();
        double mean = 0.0;
        double t1 = 0.0, t2 = 0.0, t4 = 0.0, t5 = 0.0;
        arma::vec pa_quad(M), tr_ec(M), beta(M);
        for (arma::uword m = 0; m < M; ++m)
        {
            const double p = links_->los_prob(m, k);
            const double b = links_->pathloss(m, k);
            const double a = los_power(*geom_, *links_, m, k);
            const LinkEstimator& e1 = bank_->los(m, k);
            const LinkEstimator& e0 = bank_->nlos(m, k);
            const arma::cx_vec av = steering_vector(links_->aoa_rad(m, k), n_,
                                                    geom_->antenna_spacing_m,
                                                    geom_->carrier_wavelength_m);
            const double quad = std::real(arma::cdot(av, arma::cx_vec(e1.C * av)));
            const double quad_sqrt = std::real(arma::cdot(av, arma::cx_vec(psd_sqrt(e1.C) * av)));
            const double trace_ec = p * std::real(arma::trace(e1.C)) +
                                    (1.0 - p) * std::real(arma::trace(e0.C));

            mean += p * a * quad_sqrt + b * trace_ec;
            t1 += p * a * a * quad * quad;
            t2 += b * b * trace_ec * trace_ec;
            t5 += 4.0 * p * a * b * quad * std::real(arma::trace(e1.C));
            pa_quad[m] = p * a * quad;
            tr_ec[m] = trace_ec;
            beta[m] = b;
        }
        const double t3 = sum_distinct2(pa_quad, pa_quad);
        t4 = std::pow(arma::accu(beta % tr_ec), 2);
        g.mean_published = mean;
        g.second_published = t1 + t2 + t3 + t4 + t5;
    }

    const NetworkGeometry* geom_;
    const LinkSet* links_;
    const EstimatorBank* bank_;
    arma::uword n_;
    arma::field<arma::cx_vec> mean_los_; // E[hhat | delta=1] per link
    arma::field<arma::cx_mat> cov_los_;  // cov(hhat | delta=1) per link
};

} // namespace cfmimo

#endif

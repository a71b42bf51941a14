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

#ifndef cfmimo_stats_H
#define cfmimo_stats_H

#include <armadillo>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace cfmimo
{

inline double sample_mean(const arma::vec& x) { return arma::mean(x); }

// Standard error of the sample mean (unbiased variance, pairwise summation
// via armadillo so the reduction order is fixed).
inline double standard_error(const arma::vec& x)
{
    if (x.n_elem < 2)
        return 0.0;
    return std::sqrt(arma::var(x) / static_cast<double>(x.n_elem));
}

// Leave-one-out jackknife standard error of a statistic computed from the
// per-sample sums handed to `stat`. `stat` receives the leave-one-out mean.
inline double jackknife_se_of_mean(const arma::vec& x)
{
    const arma::uword n = x.n_elem;
    if (n < 2)
        return 0.0;
    const double total = arma::accu(x);
    arma::vec loo(n);
    for (arma::uword i = 0; i < n; ++i)
        loo[i] = (total - x[i]) / static_cast<double>(n - 1);
    const double center = arma::mean(loo);
    const double ss = arma::accu(arma::square(loo - center));
    return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * ss);
}

// Jackknife standard error of an arbitrary functional of several sample
// vectors: `stat` maps leave-one-out means of each input vector to the
// statistic. All vectors must share the same length.
inline double jackknife_se(const std::vector<arma::vec>& samples,
                           const std::function<double(const arma::vec&)>& stat)
{
    if (samples.empty())
        return 0.0;
    const arma::uword n = samples.front().n_elem;
    if (n < 2)
        return 0.0;
    arma::vec totals(samples.size());
    for (arma::uword j = 0; j < samples.size(); ++j)
    {
        if (samples[j].n_elem != n)
            throw std::invalid_argument("jackknife_se: sample vectors must have equal length");
        totals[j] = arma::accu(samples[j]);
    }
    arma::vec theta(n), loo(samples.size());
    for (arma::uword i = 0; i < n; ++i)
    {
        for (arma::uword j = 0; j < samples.size(); ++j)
            loo[j] = (totals[j] - samples[j][i]) / static_cast<double>(n - 1);
        theta[i] = stat(loo);
    }
    const double center = arma::mean(theta);
    const double ss = arma::accu(arma::square(theta - center));
    return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * ss);
}

} // namespace cfmimo

#endif

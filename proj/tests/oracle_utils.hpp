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
// Test-only oracles, independent of the implementation paths they check.

#ifndef cfmimo_tests_oracle_utils_H
#define cfmimo_tests_oracle_utils_H

#include <armadillo>
#include <cmath>
#include <numbers>

namespace oracle
{

// erf by its Maclaurin series (Abramowitz & Stegun 7.1.5), accurate to
// ~1e-15 for |z| <= 3; enough for every height/gamma ratio in the tests.
inline double erf_series(double z)
{
    const double zz = z * z;
    double term = z;
    double sum = z;
    for (int n = 1; n < 200; ++n)
    {
        term *= -zz / static_cast<double>(n);
        const double add = term / static_cast<double>(2 * n + 1);
        sum += add;
        if (std::abs(add) < 1e-18 * std::abs(sum))
            break;
    }
    return 2.0 / std::sqrt(std::numbers::pi) * sum;
}

// LoS probability evaluated from scratch with the series erf.
inline double los_probability_reference(double d_km, double ap_h, double ue_h, double alpha,
                                        double mu, double gamma)
{
    const double isqrt2g = 1.0 / (gamma * std::numbers::sqrt2);
    const double omega = std::sqrt(std::numbers::pi / 2.0) * gamma / (ap_h - ue_h) *
                         (erf_series(ap_h * isqrt2g) - erf_series(ue_h * isqrt2g));
    const double n = std::sqrt(alpha * mu) * d_km;
    return std::pow(1.0 - omega, n);
}

// Gaussian tail Q(x) through the complementary error function.
inline double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// standard error of a sample mean
inline double se(const arma::vec& x)
{
    return std::sqrt(arma::var(x) / static_cast<double>(x.n_elem));
}

} // namespace oracle

#endif

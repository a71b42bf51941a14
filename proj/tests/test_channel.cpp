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

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "cfmimo/channel.hpp"
#include "oracle_utils.hpp"

using namespace cfmimo;

namespace
{
// two-AP / two-UE toy layout reused across the channel tests
NetworkGeometry toy_geometry(arma::uword n_antennas)
{
    NetworkGeometry g;
    g.n_antennas = n_antennas;
    g.aps = {{0.2, 0.3, 10.0, 0.4, 1.0}, {0.7, 0.8, 10.0, 2.1, 1.0}};
    g.ues = {{0.25, 0.33, 1.5, 1.0}, {0.6, 0.4, 1.5, 1.0}};
    return g;
}
} // namespace

TEST_CASE("steering vector phases and norm", "[channel]")
{
    const arma::cx_vec flat = steering_vector(0.0, 5, 0.07, 0.15);
    for (const auto& v : flat)
        CHECK(std::abs(v - std::complex<double>(1.0, 0.0)) == 0.0);

    CHECK(steering_vector(0.7, 1, 0.07, 0.15).n_elem == 1);
    CHECK(steering_vector(0.7, 1, 0.07, 0.15)[0] == std::complex<double>(1.0, 0.0));

    RngStream rng(3);
    for (int i = 0; i < 20; ++i)
    {
        const arma::uword n = 1 + static_cast<arma::uword>(rng.uniform() * 16);
        const arma::cx_vec a = steering_vector(rng.uniform(-1.5, 1.5), n, 0.075, 0.15);
        CHECK(a[0] == std::complex<double>(1.0, 0.0));
        CHECK_THAT(arma::accu(arma::square(arma::abs(a))),
                   Catch::Matchers::WithinAbs(static_cast<double>(n), 1e-12));
    }
}

TEST_CASE("LoS channel magnitude follows the closed form", "[channel]")
{
    NetworkGeometry g = toy_geometry(1);
    g.aps[0].x_km = g.ues[0].x_km = 0.5;
    g.aps[0].y_km = g.ues[0].y_km = 0.5; // x = 8.5 m
    const LinkSet links = link_metrics(g, 1.0, 3.76);
    const arma::cx_vec h = los_channel(g, links, 0, 0);
    CHECK_THAT(std::abs(h[0]), Catch::Matchers::WithinAbs(0.1404, 1e-4));

    // 1/x law: doubling the 3D distance halves every entry magnitude
    LinkSet stretched = links;
    stretched.dist3d_m(0, 0) *= 2.0;
    const arma::cx_vec h2 = los_channel(g, stretched, 0, 0);
    CHECK_THAT(std::abs(h2[0]), Catch::Matchers::WithinRel(std::abs(h[0]) / 2.0, 1e-12));
}

TEST_CASE("LoS indicators are Bernoulli with the link probability", "[channel]")
{
    NetworkGeometry g = toy_geometry(1);
    LinkSet links = link_metrics(g, 1.0, 3.76);

    links.los_prob.fill(1.0);
    RngStream rng(5);
    CHECK(arma::accu(draw_los_indicators(links, rng)) == 4);
    links.los_prob.fill(0.0);
    CHECK(arma::accu(draw_los_indicators(links, rng)) == 0);

    links.los_prob.fill(0.3);
    const arma::uword trials = 100000;
    double acc = 0.0;
    RngStream rng2(17);
    for (arma::uword t = 0; t < trials; ++t)
        acc += static_cast<double>(arma::accu(draw_los_indicators(links, rng2)));
    const double mean = acc / static_cast<double>(4 * trials);
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.3, 0.01));
}

TEST_CASE("channel draw: structure, moments and reproducibility", "[channel]")
{
    NetworkGeometry g = toy_geometry(2);
    LinkSet links = link_metrics(g, 1.0, 3.76);
    const arma::uword MN = g.n_aps() * g.n_antennas;

    SECTION("pure Rayleigh entries are CN(0,1)")
    {
        links.pathloss.fill(1.0);
        arma::umat delta(2, 2, arma::fill::zeros);
        RngStream rng(11);
        double acc = 0.0;
        const arma::uword trials = 25000; // 25k draws x 8 entries
        for (arma::uword t = 0; t < trials; ++t)
        {
            const ChannelRealization ch = draw_channel(g, links, delta, rng);
            acc += arma::accu(arma::square(arma::abs(ch.H)));
        }
        const double per_entry = acc / static_cast<double>(trials * MN * 2);
        CHECK_THAT(per_entry, Catch::Matchers::WithinRel(1.0, 0.02));
    }

    SECTION("degenerate NLoS leaves the stacked LoS channel")
    {
        links.pathloss.fill(0.0);
        arma::umat delta(2, 2, arma::fill::ones);
        RngStream rng(12);
        const ChannelRealization ch = draw_channel(g, links, delta, rng);
        for (arma::uword m = 0; m < 2; ++m)
        {
            const arma::cx_vec expected = los_channel(g, links, m, 0);
            const arma::cx_vec got = ch.H(arma::span(m * 2, m * 2 + 1), arma::span(0));
            CHECK(arma::norm(arma::cx_vec(got - expected)) < 1e-14);
        }
        CHECK(arma::norm(ch.nlos_part, "fro") == 0.0);
    }

    SECTION("column energy matches sum of LoS power and N beta")
    {
        RngStream drng(13);
        const arma::umat delta = draw_los_indicators(links, drng);
        double expected = 0.0;
        for (arma::uword m = 0; m < 2; ++m)
            expected += (delta(m, 0) ? 2.0 * los_power(g, links, m, 0) : 0.0) +
                        2.0 * links.pathloss(m, 0);
        RngStream rng(14);
        const arma::uword trials = 20000;
        arma::vec energy(trials);
        for (arma::uword t = 0; t < trials; ++t)
        {
            const ChannelRealization ch = draw_channel(g, links, delta, rng);
            energy[t] = arma::accu(arma::square(arma::abs(ch.H.col(0))));
        }
        CHECK_THAT(arma::mean(energy), Catch::Matchers::WithinRel(expected, 0.02));
    }

    SECTION("NLoS blocks for distinct links are uncorrelated")
    {
        arma::umat delta(2, 2, arma::fill::zeros);
        RngStream rng(15);
        const arma::uword trials = 20000;
        std::complex<double> cross{};
        for (arma::uword t = 0; t < trials; ++t)
        {
            const ChannelRealization ch = draw_channel(g, links, delta, rng);
            cross += ch.nlos_part(0, 0) * std::conj(ch.nlos_part(2, 1));
        }
        const double scale = std::sqrt(links.pathloss(0, 0) * links.pathloss(1, 1));
        CHECK(std::abs(cross) / static_cast<double>(trials) <
              5.0 * scale / std::sqrt(static_cast<double>(trials)));
    }

    SECTION("(seed, geometry) determines the realization")
    {
        arma::umat delta(2, 2, arma::fill::ones);
        RngStream r1(77), r2(77);
        const ChannelRealization c1 = draw_channel(g, links, delta, r1);
        const ChannelRealization c2 = draw_channel(g, links, delta, r2);
        CHECK(arma::norm(arma::cx_mat(c1.H - c2.H), "fro") == 0.0);
    }
}

TEST_CASE("channel dump round-trips through the binary format", "[channel]")
{
    NetworkGeometry g = toy_geometry(2);
    const LinkSet links = link_metrics(g, 1.0, 3.76);
    RngStream rng(21);
    const arma::umat delta = draw_los_indicators(links, rng);
    const ChannelRealization ch = draw_channel(g, links, delta, rng);

    const std::string path =
        (std::filesystem::temp_directory_path() / "cfmimo_dump_test.bin").string();
    dump_channel(ch.H, path);
    const arma::cx_mat back = load_channel_dump(path, ch.H.n_rows, ch.H.n_cols);
    CHECK(arma::norm(arma::cx_mat(ch.H - back), "fro") == 0.0);
    std::filesystem::remove(path);
}

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
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cfmimo/experiments.hpp"
#include "oracle_utils.hpp"

using namespace cfmimo;

namespace
{
SimulationConfig small_config()
{
    SimulationConfig cfg;
    cfg.m = 16;
    cfg.n = 1;
    cfg.k = 4;
    cfg.trials = 50;
    cfg.drops = 1;
    cfg.seed = 11;
    cfg.snr_db = {0.0, 20.0};
    return cfg;
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}
} // namespace

TEST_CASE("config serializes to JSON and back", "[experiments]")
{
    SimulationConfig cfg = small_config();
    cfg.psi = {0.5, 1.5};
    cfg.schemes = {"conjugate"};
    const nlohmann::json j = cfg;
    const SimulationConfig back = j.get<SimulationConfig>();
    CHECK(back.m == cfg.m);
    CHECK(back.psi == cfg.psi);
    CHECK(back.schemes == cfg.schemes);
    CHECK(canonical_config_json(back) == canonical_config_json(cfg));

    // missing keys fall back to defaults
    const SimulationConfig sparse = nlohmann::json{{"m", 99}}.get<SimulationConfig>();
    CHECK(sparse.m == 99);
    CHECK(sparse.k == SimulationConfig{}.k);
}

TEST_CASE("geometry JSON round trip", "[experiments]")
{
    const NetworkGeometry geom = place_uniform(small_config().geometry_params(), 3);
    const NetworkGeometry back = geometry_from_json(geometry_to_json(geom));
    REQUIRE(back.n_aps() == geom.n_aps());
    for (arma::uword m = 0; m < geom.n_aps(); ++m)
    {
        CHECK(back.aps[m].x_km == geom.aps[m].x_km);
        CHECK(back.aps[m].broadside_rad == geom.aps[m].broadside_rad);
    }
    CHECK(back.env.mu_per_km2 == geom.env.mu_per_km2);
}

TEST_CASE("experiment CSV output is byte-deterministic", "[experiments]")
{
    const SimulationConfig cfg = small_config();
    const ExperimentResult r1 = exp_rate_vs_snr(cfg);
    const ExperimentResult r2 = exp_rate_vs_snr(cfg);
    CHECK(to_csv(r1) == to_csv(r2));

    SimulationConfig other = cfg;
    other.seed = 12;
    CHECK(to_csv(exp_rate_vs_snr(other)) != to_csv(r1));

    // thread count must not change the bytes
    SimulationConfig threaded = cfg;
    threaded.threads = 4;
    CHECK(to_csv(exp_rate_vs_snr(threaded)) == to_csv(r1));
}

TEST_CASE("rate experiment emits every selected series with errors", "[experiments]")
{
    SimulationConfig cfg = small_config();
    cfg.schemes = {"conjugate", "mmse", "joint"};
    cfg.csi = {"accurate", "estimated"};
    const ExperimentResult r = exp_rate_vs_snr(cfg);
    for (const std::string scheme : {"conjugate", "mmse", "joint"})
        for (const std::string mode : {"accurate", "estimated"})
        {
            const Series& s = r.at(scheme + "_" + mode);
            REQUIRE(s.y.n_elem == r.x.n_elem);
            REQUIRE(s.se.n_elem == r.x.n_elem);
            CHECK(arma::all(s.se >= 0.0));
            CHECK(arma::all(s.y >= 0.0));
            const Series& up = r.at(scheme + "_" + mode + "_upper");
            for (arma::uword g = 0; g < r.x.n_elem; ++g)
                CHECK(s.y[g] <= up.y[g] + 3.0 * (s.se[g] + up.se[g]));
        }

    const std::string csv = to_csv(r);
    CHECK(csv.rfind("snr_db,", 0) == 0);
    CHECK(csv.find("conjugate_accurate,conjugate_accurate_se") != std::string::npos);
}

TEST_CASE("LoS PMF experiment", "[experiments]")
{
    SimulationConfig cfg = small_config();
    cfg.drops = 400;

    SECTION("zero blockage density is a point mass at M")
    {
        cfg.mu_per_km2 = 0.0;
        const ExperimentResult r = exp_los_pmf(cfg, {8});
        const Series& s = r.at("pmf_m8");
        CHECK_THAT(s.y[8], Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(arma::accu(s.y), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }

    SECTION("PMF sums to one and reports the coverage tail")
    {
        const ExperimentResult r = exp_los_pmf(cfg, {16, 32});
        CHECK_THAT(arma::accu(r.at("pmf_m16").y), Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(arma::accu(r.at("pmf_m32").y), Catch::Matchers::WithinAbs(1.0, 1e-12));
        const double p16 = r.extra.at("p_at_least_one_m16").get<double>();
        const double p32 = r.extra.at("p_at_least_one_m32").get<double>();
        CHECK(p32 >= p16 - 0.1); // coverage grows with AP count
    }

    SECTION("multi-antenna APs are rejected")
    {
        cfg.n = 2;
        CHECK_THROWS_AS(exp_los_pmf(cfg, {8}), std::invalid_argument);
    }
}

TEST_CASE("budget guard trips on oversized runs", "[experiments]")
{
    SimulationConfig cfg = small_config();
    cfg.budget = 10.0;
    CHECK_THROWS_AS(exp_rate_vs_snr(cfg), BudgetError);
}

TEST_CASE("SIR CDF experiment", "[experiments]")
{
    SimulationConfig cfg = small_config();
    cfg.trials = 500;
    cfg.drops = 2;
    cfg.csi = {"accurate"};

    const ExperimentResult r = exp_sir_cdf(cfg, "conjugate");
    const Series& s = r.at("conjugate_accurate");
    CHECK(s.y.min() >= 0.0);
    CHECK(s.y.max() <= 1.0);
    CHECK(arma::all(arma::diff(s.y) >= 0.0)); // a CDF is non-decreasing
    CHECK(r.extra.contains("zero_los_fraction"));

    SimulationConfig tiny = cfg;
    tiny.trials = 10;
    tiny.drops = 1;
    CHECK_THROWS_AS(exp_sir_cdf(tiny, "conjugate"), std::invalid_argument);

    // single UE saturates at the cap: all mass lands at the top bin
    SimulationConfig lone = cfg;
    lone.k = 1;
    const ExperimentResult r1 = exp_sir_cdf(lone, "conjugate");
    CHECK(r1.at("conjugate_accurate").y[r1.x.n_elem - 1] == 0.0); // cap is above the grid
}

TEST_CASE("validation harness separates oracle failures from published flags", "[experiments]")
{
    SimulationConfig cfg = small_config();
    const ValidationReport rep = run_validation(cfg, 2, 20000);
    CHECK(rep.all_consistent_ok());
    bool saw_published = false;
    for (const auto& c : rep.checks)
        if (c.has_published)
            saw_published = true;
    CHECK(saw_published);
    const nlohmann::json j = validation_json(rep);
    CHECK(j.is_array());
    CHECK(j.size() == rep.checks.size());
}

TEST_CASE("CLI end-to-end: determinism and exit codes", "[experiments]")
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cfmimo_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = CFMIMO_CLI_PATH;
    const std::string base = " --m 16 --k 4 --trials 40 --drops 1 --seed 7 --snr 0,20 ";

    auto run = [&](const std::string& args) {
        return std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    };

    SECTION("byte-identical CSV on rerun")
    {
        REQUIRE(run("rates" + base + "--out " + (dir / "a").string()) == 0);
        const std::string first = slurp((dir / "a" / "rates.csv").string());
        REQUIRE(run("rates" + base + "--out " + (dir / "b").string()) == 0);
        CHECK(slurp((dir / "b" / "rates.csv").string()) == first);
    }

    SECTION("usage errors exit with 2")
    {
        CHECK(WEXITSTATUS(run("rates" + base)) == 2);          // missing --out
        CHECK(WEXITSTATUS(run("no-such-subcommand")) == 2);
    }

    SECTION("budget guard exits with 3")
    {
        CHECK(WEXITSTATUS(run("rates" + base + "--budget 10 --out " + (dir / "c").string())) ==
              3);
    }

    SECTION("geometry emission and reload")
    {
        REQUIRE(run("geometry" + base + "--out " + (dir / "g").string()) == 0);
        const NetworkGeometry geom = load_geometry((dir / "g" / "geometry.json").string());
        CHECK(geom.n_aps() == 16);
        CHECK(geom.n_ues() == 4);
    }

    SECTION("config file feeds the run and flags win")
    {
        SimulationConfig cfg = small_config();
        cfg.k = 3;
        {
            std::ofstream f((dir / "cfg.json").string());
            f << nlohmann::json(cfg).dump();
        }
        REQUIRE(run("geometry --config " + (dir / "cfg.json").string() + " --m 5 --out " +
                    (dir / "h").string()) == 0);
        const NetworkGeometry geom = load_geometry((dir / "h" / "geometry.json").string());
        CHECK(geom.n_aps() == 5); // flag override
        CHECK(geom.n_ues() == 3); // config value
    }

    fs::remove_all(dir);
}

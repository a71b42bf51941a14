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
// Command-line driver. Exit codes: 0 success, 2 usage error, 3 budget guard,
// 4 validation failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfmimo/cfmimo.hpp"

namespace
{

cfmimo::SimulationConfig load_base_config(const std::string& path)
{
    cfmimo::SimulationConfig cfg;
    if (!path.empty())
    {
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("cannot open config file " + path);
        nlohmann::json j;
        in >> j;
        cfg = j.get<cfmimo::SimulationConfig>();
    }
    return cfg;
}

// The config file is located before the full parse so its values become the
// defaults the flags then override.
std::string scan_config_path(int argc, char** argv)
{
    for (int i = 1; i < argc; ++i)
    {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc)
            return argv[i + 1];
        if (a.rfind("--config=", 0) == 0)
            return a.substr(9);
    }
    return {};
}

// Shared flags; CLI values override the config file.
void add_common_options(CLI::App* app, cfmimo::SimulationConfig& cfg, std::string& config_path)
{
    app->add_option("--config", config_path, "JSON config file; flags override its values");
    app->add_option("--m", cfg.m, "number of APs");
    app->add_option("--n", cfg.n, "antennas per AP");
    app->add_option("--k", cfg.k, "number of UEs");
    app->add_option("--area", cfg.area_side_km, "deployment square side, km");
    app->add_option("--ap-height", cfg.ap_height_m, "AP antenna height, m");
    app->add_option("--ue-height", cfg.ue_height_m, "UE antenna height, m");
    app->add_option("--fc", cfg.carrier_freq_hz, "carrier frequency, Hz");
    app->add_option("--spacing", cfg.antenna_spacing_m, "antenna spacing, m (0 = lambda/2)");
    app->add_option("--alpha", cfg.alpha, "built-up area fraction");
    app->add_option("--mu", cfg.mu_per_km2, "blockage density per km^2");
    app->add_option("--gamma", cfg.gamma_m, "mean blockage altitude, m");
    app->add_option("--d0", cfg.d0_m, "pathloss reference distance, m");
    app->add_option("--eta", cfg.eta, "pathloss exponent");
    app->add_option("--los-exponent", cfg.los_exponent, "'scaled' or 'literal'");
    app->add_option("--los-redraw", cfg.los_redraw, "'per_trial' or 'per_drop'");
    app->add_option("--pilot-mode", cfg.pilot_mode, "'per_link_snr' or 'global'");
    app->add_option("--pilot-snr-db", cfg.pilot_snr_db, "received pilot SNR target, dB");
    app->add_option("--pilot-power", cfg.pilot_power, "pilot power in global mode");
    app->add_option("--snr", cfg.snr_db, "data SNR grid, dB")->delimiter(',');
    app->add_option("--sweep-snr-db", cfg.sweep_snr_db, "operating SNR for sweeps/CDF, dB");
    app->add_option("--schemes", cfg.schemes, "subset of conjugate,mmse,joint")->delimiter(',');
    app->add_option("--csi", cfg.csi, "subset of accurate,estimated")->delimiter(',');
    app->add_option("--psi", cfg.psi, "MMSE regularizer override(s); sweep if several")
        ->delimiter(',');
    app->add_option("--trials", cfg.trials, "Monte-Carlo trials per drop");
    app->add_option("--drops", cfg.drops, "independent geometry drops");
    app->add_option("--seed", cfg.seed, "master RNG seed");
    app->add_option("--threads", cfg.threads, "worker threads (1 = regression mode)");
    app->add_option("--budget", cfg.budget, "work budget, channel entries");
    app->add_option("--geometry-in", cfg.geometry_file, "fixed geometry JSON to load");
    app->add_flag("--paper-scale", cfg.paper_scale, "use M=1024, K=64 (N from --n)");
    app->add_option("--out", cfg.out, "output directory")->required();
}

void apply_paper_scale(cfmimo::SimulationConfig& cfg)
{
    if (cfg.paper_scale)
    {
        cfg.m = 1024;
        cfg.k = 64;
    }
}

int write_and_report(const cfmimo::ExperimentResult& r, const cfmimo::SimulationConfig& cfg)
{
    const std::string path = cfmimo::write_result(r, cfg.out);
    std::printf("%s: %llu series x %llu points -> %s\n", r.id.c_str(),
                static_cast<unsigned long long>(r.series.size()),
                static_cast<unsigned long long>(r.x.n_elem), path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"cfmimo - cell-free massive MIMO uplink simulator"};
    app.require_subcommand(1);

    struct SubState
    {
        cfmimo::SimulationConfig cfg;
        std::string config_path;
    };

    std::map<std::string, SubState> st;
    try
    {
        const std::string config_path = scan_config_path(argc, argv);
        if (!config_path.empty())
        {
            const cfmimo::SimulationConfig base = load_base_config(config_path);
            for (const char* name :
                 {"geometry", "pmf-los", "rates", "cdf", "compare", "sweep-k", "sweep-ap",
                  "validate"})
                st[name].cfg = base;
        }
    }
    catch (const std::exception& e)
    {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    }

    std::vector<arma::uword> pmf_m = {128, 256, 512, 1024};
    std::vector<arma::uword> k_list = {1, 16, 32, 64};
    std::vector<arma::uword> ap_m = {1024, 512, 256, 128};
    std::vector<arma::uword> ap_n = {1, 2, 4, 8};
    std::string cdf_combiner = "conjugate";
    std::string dump_channel_path;
    arma::uword val_geometries = 5;
    arma::uword val_trials = 20000;

    auto* geometry = app.add_subcommand("geometry", "place a network and emit geometry JSON");
    add_common_options(geometry, st["geometry"].cfg, st["geometry"].config_path);
    geometry->add_option("--dump-channel", dump_channel_path,
                         "also dump one channel realization (raw complex f64)");

    auto* pmf = app.add_subcommand("pmf-los", "PMF of LoS path counts per UE");
    add_common_options(pmf, st["pmf-los"].cfg, st["pmf-los"].config_path);
    pmf->add_option("--m-list", pmf_m, "AP counts")->delimiter(',');

    auto* rates = app.add_subcommand("rates", "sum rate and bounds vs data SNR");
    add_common_options(rates, st["rates"].cfg, st["rates"].config_path);

    auto* cdf = app.add_subcommand("cdf", "SIR/SINR CDF across users");
    add_common_options(cdf, st["cdf"].cfg, st["cdf"].config_path);
    cdf->add_option("--combiner", cdf_combiner, "'conjugate' or 'mmse'");

    auto* compare = app.add_subcommand("compare", "scheme comparison vs data SNR");
    add_common_options(compare, st["compare"].cfg, st["compare"].config_path);

    auto* sweep_k = app.add_subcommand("sweep-k", "per-user rate vs number of UEs");
    add_common_options(sweep_k, st["sweep-k"].cfg, st["sweep-k"].config_path);
    sweep_k->add_option("--k-list", k_list, "UE counts")->delimiter(',');

    auto* sweep_ap = app.add_subcommand("sweep-ap", "sum rate vs AP/antenna split, MN fixed");
    add_common_options(sweep_ap, st["sweep-ap"].cfg, st["sweep-ap"].config_path);
    sweep_ap->add_option("--m-list", ap_m, "AP counts")->delimiter(',');
    sweep_ap->add_option("--n-list", ap_n, "antennas per AP, parallel to --m-list")
        ->delimiter(',');

    auto* validate = app.add_subcommand("validate", "closed-form vs Monte-Carlo oracle suite");
    add_common_options(validate, st["validate"].cfg, st["validate"].config_path);
    validate->add_option("--geometries", val_geometries, "random geometries to test");
    validate->add_option("--val-trials", val_trials, "oracle draws per geometry");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try
    {
        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        SubState& s = st[name];
        apply_paper_scale(s.cfg);
        s.cfg.validate();

        if (name == "geometry")
        {
            const cfmimo::NetworkGeometry geom =
                s.cfg.geometry_file.empty()
                    ? cfmimo::place_uniform(s.cfg.geometry_params(),
                                            cfmimo::derive_seed(s.cfg.seed, {cfmimo::stream::drop, 0}))
                    : cfmimo::load_geometry(s.cfg.geometry_file);
            std::filesystem::create_directories(s.cfg.out);
            const std::string path = s.cfg.out + "/geometry.json";
            cfmimo::save_geometry(geom, path);
            if (!dump_channel_path.empty())
            {
                const cfmimo::LinkSet links =
                    cfmimo::link_metrics(geom, s.cfg.d0_m, s.cfg.eta, s.cfg.los_convention());
                cfmimo::RngStream rng(cfmimo::derive_seed(s.cfg.seed, {cfmimo::stream::channel}));
                const arma::umat delta = cfmimo::draw_los_indicators(links, rng);
                const cfmimo::ChannelRealization ch =
                    cfmimo::draw_channel(geom, links, delta, rng);
                cfmimo::dump_channel(ch.H, dump_channel_path);
            }
            std::printf("geometry: %llu APs, %llu UEs -> %s\n",
                        static_cast<unsigned long long>(geom.n_aps()),
                        static_cast<unsigned long long>(geom.n_ues()), path.c_str());
            return 0;
        }
        if (name == "pmf-los")
            return write_and_report(cfmimo::exp_los_pmf(s.cfg, pmf_m), s.cfg);
        if (name == "rates")
            return write_and_report(cfmimo::exp_rate_vs_snr(s.cfg), s.cfg);
        if (name == "cdf")
            return write_and_report(cfmimo::exp_sir_cdf(s.cfg, cdf_combiner), s.cfg);
        if (name == "compare")
            return write_and_report(cfmimo::exp_scheme_compare(s.cfg), s.cfg);
        if (name == "sweep-k")
            return write_and_report(cfmimo::exp_per_user_vs_k(s.cfg, k_list), s.cfg);
        if (name == "sweep-ap")
        {
            if (ap_m.size() != ap_n.size())
                throw CLI::ValidationError("--n-list", "must match --m-list in length");
            std::vector<std::pair<arma::uword, arma::uword>> mn;
            for (size_t i = 0; i < ap_m.size(); ++i)
                mn.push_back({ap_m[i], ap_n[i]});
            return write_and_report(cfmimo::exp_ap_config_sweep(s.cfg, mn), s.cfg);
        }
        if (name == "validate")
        {
            const cfmimo::ValidationReport rep =
                cfmimo::run_validation(s.cfg, val_geometries, val_trials);
            std::filesystem::create_directories(s.cfg.out);
            std::ofstream f(s.cfg.out + "/validate.json", std::ios::binary);
            f << cfmimo::validation_json(rep).dump(2) << "\n";
            int failed = 0;
            for (const auto& c : rep.checks)
            {
                std::printf("[%s] %-26s closed=%.6g oracle=%.6g (se %.2g)%s\n",
                            c.ok ? "ok" : (c.gate ? "FAIL" : "flag"), c.name.c_str(), c.closed,
                            c.oracle, c.oracle_se,
                            c.has_published && !c.published_ok ? " [published differs]" : "");
                if (c.gate && !c.ok)
                    ++failed;
            }
            std::printf("validate: %zu checks, %d failed\n", rep.checks.size(), failed);
            return rep.all_consistent_ok() ? 0 : 4;
        }
        std::fprintf(stderr, "unknown subcommand\n");
        return 2;
    }
    catch (const CLI::ValidationError& e)
    {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    }
    catch (const cfmimo::BudgetError& e)
    {
        std::fprintf(stderr, "budget guard: %s\n", e.what());
        return 3;
    }
    catch (const std::exception& e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

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
// Experiment drivers: reproducible Monte-Carlo runs over drops and trials
// with CSV + JSON outputs. Every byte of output is a deterministic function
// of (config, seed), independent of the worker count.

#ifndef cfmimo_experiments_H
#define cfmimo_experiments_H

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfmimo/rates.hpp"
#include "cfmimo/serialize.hpp"

namespace cfmimo
{

// Raised when a run would exceed the configured work budget; the CLI maps
// this to its own exit code.
struct BudgetError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct SimulationConfig
{
    // geometry
    arma::uword m = 256;
    arma::uword n = 1;
    arma::uword k = 16;
    double area_side_km = 1.0;
    double ap_height_m = 10.0;
    double ue_height_m = 1.5;
    double carrier_freq_hz = 2.0e9;
    double antenna_spacing_m = 0.0; // 0 -> lambda/2
    double ap_gain = 1.0;
    double ue_gain = 1.0;
    // blockage environment
    double alpha = 0.5;
    double mu_per_km2 = 300.0;
    double gamma_m = 20.0;
    // channel
    double d0_m = 1.0;
    double eta = 3.76;
    std::string los_exponent = "scaled";  // "scaled" | "literal"
    std::string los_redraw = "per_trial"; // "per_trial" | "per_drop"
    // powers
    std::string pilot_mode = "per_link_snr"; // "per_link_snr" | "global"
    double pilot_snr_db = 20.0;
    double pilot_power = 1.0;
    double noise_power = 1.0;
    std::vector<double> snr_db = {-10, -5, 0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
    double sweep_snr_db = 30.0; // operating point of the K / AP-config sweeps
    // schemes
    std::vector<std::string> schemes = {"conjugate", "mmse", "joint"};
    std::vector<std::string> csi = {"accurate", "estimated"};
    std::vector<double> psi; // empty -> default regularizer formula
    // Monte Carlo
    arma::uword trials = 200;
    arma::uword drops = 1;
    std::uint64_t seed = 1;
    std::string out;
    std::string geometry_file; // load a fixed layout instead of placing
    bool paper_scale = false;
    arma::uword threads = 1;
    double budget = 4.0e9; // guard on drops * trials * M * N * K

    void validate() const
    {
        if (m < 1 || n < 1 || k < 1)
            throw std::invalid_argument("config: m, n, k must be positive");
        if (trials < 1 || drops < 1)
            throw std::invalid_argument("config: trials and drops must be positive");
        if (!(noise_power > 0.0))
            throw std::invalid_argument("config: noise power must be positive");
        if (los_exponent != "scaled" && los_exponent != "literal")
            throw std::invalid_argument("config: los_exponent must be 'scaled' or 'literal'");
        if (los_redraw != "per_trial" && los_redraw != "per_drop")
            throw std::invalid_argument("config: los_redraw must be 'per_trial' or 'per_drop'");
        if (pilot_mode != "per_link_snr" && pilot_mode != "global")
            throw std::invalid_argument("config: pilot_mode must be 'per_link_snr' or 'global'");
    }

    void check_budget(double scale = 1.0) const
    {
        const double cost = scale * static_cast<double>(drops) * static_cast<double>(trials) *
                            static_cast<double>(m) * static_cast<double>(n) *
                            static_cast<double>(k);
        if (cost > budget)
            throw BudgetError("estimated cost " + format_double(cost) +
                              " channel entries exceeds budget " + format_double(budget));
    }

    GeometryParams geometry_params() const
    {
        GeometryParams p;
        p.n_aps = m;
        p.n_ues = k;
        p.area_side_km = area_side_km;
        p.ap_height_m = ap_height_m;
        p.ue_height_m = ue_height_m;
        p.n_antennas = n;
        p.carrier_freq_hz = carrier_freq_hz;
        p.antenna_spacing_m = antenna_spacing_m;
        p.ap_gain = ap_gain;
        p.ue_gain = ue_gain;
        p.env = {alpha, mu_per_km2, gamma_m};
        return p;
    }

    PilotConfig pilot_config() const
    {
        PilotConfig pc;
        pc.mode = pilot_mode == "global" ? PilotConfig::Mode::global_power
                                         : PilotConfig::Mode::per_link_snr;
        pc.pilot_power = pilot_power;
        pc.pilot_snr_db = pilot_snr_db;
        pc.noise_power = noise_power;
        return pc;
    }

    LosExponent los_convention() const
    {
        return los_exponent == "literal" ? LosExponent::literal_sqrt
                                         : LosExponent::scaled_by_distance;
    }

    arma::vec es_grid() const
    {
        arma::vec es(snr_db.size());
        for (size_t i = 0; i < snr_db.size(); ++i)
            es[i] = std::pow(10.0, snr_db[i] / 10.0) * noise_power;
        return es;
    }

    bool wants(const std::string& scheme) const
    {
        return std::find(schemes.begin(), schemes.end(), scheme) != schemes.end();
    }
    bool wants_csi(const std::string& mode) const
    {
        return std::find(csi.begin(), csi.end(), mode) != csi.end();
    }
};

inline void to_json(nlohmann::json& j, const SimulationConfig& c)
{
    j = nlohmann::json{{"m", c.m},
                       {"n", c.n},
                       {"k", c.k},
                       {"area_side_km", c.area_side_km},
                       {"ap_height_m", c.ap_height_m},
                       {"ue_height_m", c.ue_height_m},
                       {"carrier_freq_hz", c.carrier_freq_hz},
                       {"antenna_spacing_m", c.antenna_spacing_m},
                       {"ap_gain", c.ap_gain},
                       {"ue_gain", c.ue_gain},
                       {"alpha", c.alpha},
                       {"mu_per_km2", c.mu_per_km2},
                       {"gamma_m", c.gamma_m},
                       {"d0_m", c.d0_m},
                       {"eta", c.eta},
                       {"los_exponent", c.los_exponent},
                       {"los_redraw", c.los_redraw},
                       {"pilot_mode", c.pilot_mode},
                       {"pilot_snr_db", c.pilot_snr_db},
                       {"pilot_power", c.pilot_power},
                       {"noise_power", c.noise_power},
                       {"snr_db", c.snr_db},
                       {"sweep_snr_db", c.sweep_snr_db},
                       {"schemes", c.schemes},
                       {"csi", c.csi},
                       {"psi", c.psi},
                       {"trials", c.trials},
                       {"drops", c.drops},
                       {"seed", c.seed},
                       {"out", c.out},
                       {"geometry_file", c.geometry_file},
                       {"paper_scale", c.paper_scale},
                       {"threads", c.threads},
                       {"budget", c.budget}};
}

inline void from_json(const nlohmann::json& j, SimulationConfig& c)
{
    SimulationConfig d;
    auto get = [&](const char* key, auto& field, const auto& fallback) {
        field = j.value(key, fallback);
    };
    get("m", c.m, d.m);
    get("n", c.n, d.n);
    get("k", c.k, d.k);
    get("area_side_km", c.area_side_km, d.area_side_km);
    get("ap_height_m", c.ap_height_m, d.ap_height_m);
    get("ue_height_m", c.ue_height_m, d.ue_height_m);
    get("carrier_freq_hz", c.carrier_freq_hz, d.carrier_freq_hz);
    get("antenna_spacing_m", c.antenna_spacing_m, d.antenna_spacing_m);
    get("ap_gain", c.ap_gain, d.ap_gain);
    get("ue_gain", c.ue_gain, d.ue_gain);
    get("alpha", c.alpha, d.alpha);
    get("mu_per_km2", c.mu_per_km2, d.mu_per_km2);
    get("gamma_m", c.gamma_m, d.gamma_m);
    get("d0_m", c.d0_m, d.d0_m);
    get("eta", c.eta, d.eta);
    get("los_exponent", c.los_exponent, d.los_exponent);
    get("los_redraw", c.los_redraw, d.los_redraw);
    get("pilot_mode", c.pilot_mode, d.pilot_mode);
    get("pilot_snr_db", c.pilot_snr_db, d.pilot_snr_db);
    get("pilot_power", c.pilot_power, d.pilot_power);
    get("noise_power", c.noise_power, d.noise_power);
    get("snr_db", c.snr_db, d.snr_db);
    get("sweep_snr_db", c.sweep_snr_db, d.sweep_snr_db);
    get("schemes", c.schemes, d.schemes);
    get("csi", c.csi, d.csi);
    get("psi", c.psi, d.psi);
    get("trials", c.trials, d.trials);
    get("drops", c.drops, d.drops);
    get("seed", c.seed, d.seed);
    get("out", c.out, d.out);
    get("geometry_file", c.geometry_file, d.geometry_file);
    get("paper_scale", c.paper_scale, d.paper_scale);
    get("threads", c.threads, d.threads);
    get("budget", c.budget, d.budget);
}

inline std::string canonical_config_json(const SimulationConfig& c)
{
    return nlohmann::json(c).dump();
}

// ---------------------------------------------------------------------------
// experiment results
// ---------------------------------------------------------------------------

struct Series
{
    std::string name;
    arma::vec y;
    arma::vec se; // same length as y; zero where deterministic
};

struct ExperimentResult
{
    std::string id;
    std::string x_label;
    arma::vec x;
    std::vector<Series> series;
    std::uint64_t seed = 0;
    std::string config_json;
    nlohmann::json extra; // experiment-specific scalars

    const Series& at(const std::string& name) const
    {
        for (const auto& s : series)
            if (s.name == name)
                return s;
        throw std::out_of_range("no series named " + name);
    }
};

inline std::string to_csv(const ExperimentResult& r)
{
    std::string out = r.x_label;
    for (const auto& s : r.series)
    {
        out += "," + s.name + "," + s.name + "_se";
        if (s.y.n_elem != r.x.n_elem || s.se.n_elem != r.x.n_elem)
            throw std::logic_error("series length mismatch in " + r.id);
    }
    out += "\n";
    for (arma::uword i = 0; i < r.x.n_elem; ++i)
    {
        out += format_double(r.x[i]);
        for (const auto& s : r.series)
            out += "," + format_double(s.y[i]) + "," + format_double(s.se[i]);
        out += "\n";
    }
    return out;
}

inline nlohmann::json sidecar_json(const ExperimentResult& r, const std::string& csv)
{
    nlohmann::json j;
    j["experiment"] = r.id;
    j["seed"] = r.seed;
    j["config"] = nlohmann::json::parse(r.config_json);
    j["config_hash"] = hex64(fnv1a64(r.config_json));
    j["csv_digest"] = hex64(fnv1a64(csv));
    j["series"] = nlohmann::json::array();
    for (const auto& s : r.series)
        j["series"].push_back(s.name);
    if (!r.extra.is_null())
        j["extra"] = r.extra;
    return j;
}

// Writes <out_dir>/<id>.csv and <out_dir>/<id>.json; returns the CSV path.
inline std::string write_result(const ExperimentResult& r, const std::string& out_dir)
{
    std::filesystem::create_directories(out_dir);
    const std::string csv = to_csv(r);
    const std::string csv_path = out_dir + "/" + r.id + ".csv";
    {
        std::ofstream f(csv_path, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + csv_path);
        f << csv;
    }
    {
        std::ofstream f(out_dir + "/" + r.id + ".json", std::ios::binary);
        f << sidecar_json(r, csv).dump(2) << "\n";
    }
    return csv_path;
}

// ---------------------------------------------------------------------------
// shared per-drop machinery
// ---------------------------------------------------------------------------

struct DropContext
{
    NetworkGeometry geom;
    LinkSet links;
    EstimatorBank bank;
    arma::umat fixed_delta; // only used in per_drop mode
    bool per_drop_delta = false;
};

inline DropContext make_drop(const SimulationConfig& cfg, arma::uword drop, bool needs_estimates)
{
    DropContext d;
    const std::uint64_t drop_seed = derive_seed(cfg.seed, {stream::drop, drop});
    d.geom = cfg.geometry_file.empty() ? place_uniform(cfg.geometry_params(), drop_seed)
                                       : load_geometry(cfg.geometry_file);
    d.links = link_metrics(d.geom, cfg.d0_m, cfg.eta, cfg.los_convention());
    if (needs_estimates)
        d.bank = build_estimator_bank(d.geom, d.links, cfg.pilot_config());
    d.per_drop_delta = cfg.los_redraw == "per_drop";
    if (d.per_drop_delta)
    {
        RngStream rng(derive_seed(cfg.seed, {stream::los, drop}));
        d.fixed_delta = draw_los_indicators(d.links, rng);
    }
    return d;
}

inline std::vector<TrialGrams> drop_trials(const SimulationConfig& cfg, const DropContext& d,
                                           arma::uword drop, bool needs_estimates)
{
    return sample_trials(d.geom, d.links, needs_estimates ? &d.bank : nullptr,
                         d.per_drop_delta ? &d.fixed_delta : nullptr,
                         derive_seed(cfg.seed, {stream::trial, drop}), cfg.trials, cfg.threads);
}

// Averages per-drop series; the reported SE combines the within-drop SE (for
// a single drop) or the spread across drops.
inline void accumulate_series(std::vector<arma::vec>& values, std::vector<arma::vec>& errors,
                              const arma::vec& y, const arma::vec& se)
{
    values.push_back(y);
    errors.push_back(se);
}

inline Series reduce_series(const std::string& name, const std::vector<arma::vec>& values,
                            const std::vector<arma::vec>& errors)
{
    const arma::uword D = values.size();
    const arma::uword G = values.front().n_elem;
    arma::vec mean(G, arma::fill::zeros), se(G, arma::fill::zeros);
    for (const auto& v : values)
        mean += v;
    mean /= static_cast<double>(D);
    if (D == 1)
    {
        se = errors.front();
    }
    else
    {
        for (arma::uword g = 0; g < G; ++g)
        {
            arma::vec per_drop(D);
            for (arma::uword d = 0; d < D; ++d)
                per_drop[d] = values[d][g];
            se[g] = standard_error(per_drop);
        }
    }
    return {name, mean, se};
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

// PMF of the number of LoS paths seen by a user, for several AP counts.
inline ExperimentResult exp_los_pmf(const SimulationConfig& cfg,
                                    const std::vector<arma::uword>& m_list = {128, 256, 512, 1024})
{
    cfg.validate();
    if (cfg.n != 1)
        throw std::invalid_argument("exp_los_pmf: defined for single-antenna APs (n = 1)");

    const arma::uword max_m = *std::max_element(m_list.begin(), m_list.end());
    std::map<arma::uword, arma::vec> counts; // M -> histogram
    arma::uword x_max = 0;

    for (arma::uword mi = 0; mi < m_list.size(); ++mi)
    {
        const arma::uword M = m_list[mi];
        SimulationConfig c = cfg;
        c.m = M;
        c.k = 1;
        c.check_budget(1.0 / static_cast<double>(cfg.trials)); // drops only, no data phase
        arma::vec hist(max_m + 1, arma::fill::zeros);
        for (arma::uword drop = 0; drop < cfg.drops; ++drop)
        {
            const std::uint64_t ds = derive_seed(cfg.seed, {stream::drop, M, drop});
            const NetworkGeometry geom = place_uniform(c.geometry_params(), ds);
            const LinkSet links = link_metrics(geom, cfg.d0_m, cfg.eta, cfg.los_convention());
            RngStream rng(derive_seed(cfg.seed, {stream::los, M, drop}));
            const arma::umat delta = draw_los_indicators(links, rng);
            const arma::uword n_los = arma::accu(delta.col(0));
            hist[n_los] += 1.0;
            x_max = std::max(x_max, n_los);
        }
        counts[M] = hist / static_cast<double>(cfg.drops);
    }

    ExperimentResult r;
    r.id = "pmf-los";
    r.x_label = "n_los_paths";
    r.x = arma::regspace(0.0, static_cast<double>(x_max));
    r.seed = cfg.seed;
    r.config_json = canonical_config_json(cfg);
    for (const auto& [M, hist] : counts)
    {
        Series s;
        s.name = "pmf_m" + std::to_string(M);
        s.y = hist.head(x_max + 1);
        s.se.set_size(x_max + 1);
        for (arma::uword i = 0; i <= x_max; ++i)
            s.se[i] = std::sqrt(std::max(0.0, s.y[i] * (1.0 - s.y[i]) /
                                                  static_cast<double>(cfg.drops)));
        r.series.push_back(std::move(s));
        r.extra["p_at_least_one_m" + std::to_string(M)] = 1.0 - counts[M][0];
    }
    return r;
}

// Sum rate and bounds versus data SNR for the selected schemes / CSI modes.
inline ExperimentResult exp_rate_vs_snr(const SimulationConfig& cfg,
                                        bool with_bounds = true,
                                        const std::string& id = "rates")
{
    cfg.validate();
    cfg.check_budget();
    const arma::vec es = cfg.es_grid();
    const bool any_estimated = cfg.wants_csi("estimated");

    struct Slot
    {
        std::vector<arma::vec> val, err;
    };
    std::map<std::string, Slot> slots;
    auto push = [&](const std::string& name, const arma::vec& y, const arma::vec& se) {
        slots[name].val.push_back(y);
        slots[name].err.push_back(se);
    };

    for (arma::uword drop = 0; drop < cfg.drops; ++drop)
    {
        const DropContext d = make_drop(cfg, drop, any_estimated);
        const std::vector<TrialGrams> trials = drop_trials(cfg, d, drop, any_estimated);
        const MomentEngine eng(d.geom, d.links);
        std::optional<EstMomentEngine> est;
        if (any_estimated)
            est.emplace(d.geom, d.links, d.bank);

        for (const std::string& scheme : cfg.schemes)
        {
            for (const std::string& mode : cfg.csi)
            {
                const bool estimated = mode == "estimated";
                // the regularizer sweep only affects the estimated-CSI MMSE branch
                std::vector<std::pair<std::string, double>> psis = {{"", 0.0}};
                if (scheme == "mmse" && !cfg.psi.empty())
                {
                    psis.clear();
                    for (size_t i = 0; i < cfg.psi.size(); ++i)
                        psis.push_back({cfg.psi.size() > 1
                                            ? "_psi" + format_double(cfg.psi[i])
                                            : "",
                                        cfg.psi[i]});
                }
                for (const auto& [suffix, psi] : psis)
                {
                    MmseRateOptions mopt;
                    mopt.psi_override = psi;
                    const SchemeRates sr =
                        empirical_rate(eng, est ? &*est : nullptr, trials,
                                       scheme_from_string(scheme), estimated, es,
                                       cfg.noise_power, mopt);
                    const std::string base = scheme + "_" + mode + suffix;
                    push(base, sr.empirical, sr.empirical_se);
                    if (with_bounds)
                    {
                        push(base + "_upper", sr.upper, sr.upper_se);
                        push(base + "_lower", sr.lower, sr.lower_se);
                    }
                }
            }
        }
    }

    ExperimentResult r;
    r.id = id;
    r.x_label = "snr_db";
    r.x = arma::vec(cfg.snr_db);
    r.seed = cfg.seed;
    r.config_json = canonical_config_json(cfg);
    for (auto& [name, slot] : slots)
        r.series.push_back(reduce_series(name, slot.val, slot.err));
    return r;
}

inline ExperimentResult exp_scheme_compare(const SimulationConfig& cfg)
{
    return exp_rate_vs_snr(cfg, /*with_bounds=*/false, "compare");
}

// Empirical CDF of the per-user SIR (conjugate) or SINR (MMSE, at the
// configured sweep SNR). The sidecar records the zero-LoS user fraction.
inline ExperimentResult exp_sir_cdf(const SimulationConfig& cfg, const std::string& combiner)
{
    cfg.validate();
    cfg.check_budget();
    if (combiner != "conjugate" && combiner != "mmse")
        throw std::invalid_argument("exp_sir_cdf: combiner must be 'conjugate' or 'mmse'");
    if (cfg.drops * cfg.trials < 1000)
        throw std::invalid_argument("exp_sir_cdf: needs at least 1000 realizations "
                                    "(drops * trials)");

    const bool any_estimated = cfg.wants_csi("estimated");
    const double es_point = std::pow(10.0, cfg.sweep_snr_db / 10.0) * cfg.noise_power;

    std::map<std::string, std::vector<double>> samples;
    double zero_los = 0.0;
    arma::uword realizations = 0;

    for (arma::uword drop = 0; drop < cfg.drops; ++drop)
    {
        const DropContext d = make_drop(cfg, drop, any_estimated);
        const std::vector<TrialGrams> trials = drop_trials(cfg, d, drop, any_estimated);
        std::optional<EstMomentEngine> est;
        if (any_estimated && combiner == "mmse")
            est.emplace(d.geom, d.links, d.bank);
        const arma::vec es(cfg.k, arma::fill::value(es_point));

        for (const TrialGrams& t : trials)
        {
            for (arma::uword k = 0; k < cfg.k; ++k)
                if (arma::accu(t.delta.col(k)) == 0)
                    zero_los += 1.0;
            realizations += 1;
            for (const std::string& mode : cfg.csi)
            {
                const bool estimated = mode == "estimated";
                arma::vec v;
                if (combiner == "conjugate")
                {
                    v = sir_samples(conjugate_from_grams(t, estimated, cfg.noise_power), es);
                }
                else
                {
                    double psi = cfg.noise_power;
                    if (estimated)
                    {
                        if (!cfg.psi.empty())
                            psi = cfg.psi.front();
                        else
                        {
                            const arma::uword mn = cfg.m * cfg.n;
                            double err = 0.0;
                            for (arma::uword k = 0; k < cfg.k; ++k)
                                err += es_point * est->mean_error_power(k);
                            psi += err / static_cast<double>(mn);
                        }
                    }
                    v = sinr_samples(mmse_from_grams(t, estimated, cfg.noise_power, psi), es);
                }
                auto& dst = samples[combiner + "_" + mode];
                for (double x : v)
                    dst.push_back(10.0 * std::log10(std::max(x, 1e-30)));
            }
        }
    }

    ExperimentResult r;
    r.id = "cdf-" + combiner;
    r.x_label = "sinr_db";
    r.x = arma::regspace(-60.0, 1.0, 100.0);
    r.seed = cfg.seed;
    r.config_json = canonical_config_json(cfg);
    for (auto& [name, vals] : samples)
    {
        arma::vec v(vals);
        v = arma::sort(v);
        Series s;
        s.name = name;
        s.y.set_size(r.x.n_elem);
        s.se.set_size(r.x.n_elem);
        const double n = static_cast<double>(v.n_elem);
        for (arma::uword i = 0; i < r.x.n_elem; ++i)
        {
            const double c =
                static_cast<double>(std::lower_bound(v.begin(), v.end(), r.x[i]) - v.begin()) / n;
            s.y[i] = c;
            s.se[i] = std::sqrt(std::max(0.0, c * (1.0 - c) / n));
        }
        r.series.push_back(std::move(s));
    }
    r.extra["zero_los_fraction"] = zero_los / (static_cast<double>(realizations) *
                                               static_cast<double>(cfg.k));
    r.extra["sinr_operating_snr_db"] = cfg.sweep_snr_db;
    return r;
}

// Per-user rate versus the number of UEs (conjugate and MMSE, accurate CSI)
// at the sweep operating SNR.
inline ExperimentResult exp_per_user_vs_k(const SimulationConfig& cfg,
                                          const std::vector<arma::uword>& k_list = {1, 16, 32,
                                                                                    64})
{
    cfg.validate();
    const arma::vec es_grid(std::vector<double>{
        std::pow(10.0, cfg.sweep_snr_db / 10.0) * cfg.noise_power});

    std::vector<arma::vec> conj_val, conj_err, mmse_val, mmse_err;
    arma::vec x(k_list.size());

    for (arma::uword ki = 0; ki < k_list.size(); ++ki)
    {
        SimulationConfig c = cfg;
        c.k = k_list[ki];
        c.check_budget();
        x[ki] = static_cast<double>(c.k);
        arma::vec cj(cfg.drops), mm(cfg.drops);
        for (arma::uword drop = 0; drop < cfg.drops; ++drop)
        {
            const DropContext d = make_drop(c, drop, false);
            const std::vector<TrialGrams> trials = drop_trials(c, d, drop, false);
            const MomentEngine eng(d.geom, d.links);
            const SchemeRates conj =
                conjugate_rates(eng, nullptr, trials, es_grid, cfg.noise_power, false);
            const SchemeRates mmse = mmse_rates(trials, es_grid, cfg.noise_power, nullptr, {});
            cj[drop] = arma::mean(conj.per_ue.col(0));
            mm[drop] = arma::mean(mmse.per_ue.col(0));
        }
        conj_val.push_back(cj);
        mmse_val.push_back(mm);
    }

    ExperimentResult r;
    r.id = "sweep-k";
    r.x_label = "n_ues";
    r.x = x;
    r.seed = cfg.seed;
    r.config_json = canonical_config_json(cfg);
    Series cs{"conjugate_per_ue", arma::vec(x.n_elem), arma::vec(x.n_elem)};
    Series ms{"mmse_per_ue", arma::vec(x.n_elem), arma::vec(x.n_elem)};
    for (arma::uword i = 0; i < x.n_elem; ++i)
    {
        cs.y[i] = arma::mean(conj_val[i]);
        cs.se[i] = standard_error(conj_val[i]);
        ms.y[i] = arma::mean(mmse_val[i]);
        ms.se[i] = standard_error(mmse_val[i]);
    }
    r.series.push_back(std::move(cs));
    r.series.push_back(std::move(ms));
    return r;
}

// Sum rate for AP/antenna splits with the total antenna count fixed,
// accurate CSI, at the sweep operating SNR.
inline ExperimentResult exp_ap_config_sweep(
    const SimulationConfig& cfg,
    const std::vector<std::pair<arma::uword, arma::uword>>& configs = {{1024, 1}, {512, 2},
                                                                       {256, 4}, {128, 8}})
{
    cfg.validate();
    const arma::vec es_grid(std::vector<double>{
        std::pow(10.0, cfg.sweep_snr_db / 10.0) * cfg.noise_power});

    arma::vec x(configs.size());
    std::map<std::string, std::pair<arma::vec, arma::vec>> out;
    for (const std::string& s : {"conjugate", "mmse", "joint"})
        out[s] = {arma::vec(configs.size()), arma::vec(configs.size())};

    for (arma::uword ci = 0; ci < configs.size(); ++ci)
    {
        SimulationConfig c = cfg;
        c.m = configs[ci].first;
        c.n = configs[ci].second;
        c.check_budget();
        x[ci] = static_cast<double>(c.m);
        std::map<std::string, arma::vec> per_drop;
        for (const std::string& s : {"conjugate", "mmse", "joint"})
            per_drop[s] = arma::vec(cfg.drops);
        for (arma::uword drop = 0; drop < cfg.drops; ++drop)
        {
            const DropContext d = make_drop(c, drop, false);
            const std::vector<TrialGrams> trials = drop_trials(c, d, drop, false);
            const MomentEngine eng(d.geom, d.links);
            per_drop["conjugate"][drop] =
                conjugate_rates(eng, nullptr, trials, es_grid, cfg.noise_power, false)
                    .empirical[0];
            per_drop["mmse"][drop] =
                mmse_rates(trials, es_grid, cfg.noise_power, nullptr, {}).empirical[0];
            per_drop["joint"][drop] =
                joint_rates(eng, nullptr, trials, es_grid, cfg.noise_power, false).empirical[0];
        }
        for (const std::string& s : {"conjugate", "mmse", "joint"})
        {
            out[s].first[ci] = arma::mean(per_drop[s]);
            out[s].second[ci] = standard_error(per_drop[s]);
        }
    }

    ExperimentResult r;
    r.id = "sweep-ap";
    r.x_label = "n_aps";
    r.x = x;
    r.seed = cfg.seed;
    r.config_json = canonical_config_json(cfg);
    for (const std::string& s : {"conjugate", "mmse", "joint"})
        r.series.push_back({s, out[s].first, out[s].second});
    return r;
}

// ---------------------------------------------------------------------------
// closed-form versus Monte-Carlo validation
// ---------------------------------------------------------------------------

struct FormulaCheck
{
    std::string name;
    double closed = 0;       // oracle-adjudicated closed form
    double published = 0;    // verbatim printed expression (when it differs)
    bool has_published = false;
    double oracle = 0;       // Monte-Carlo estimate
    double oracle_se = 0;    // standard error of the estimate
    bool ok = false;         // |closed - oracle| <= 3 se
    bool published_ok = false;
    bool gate = true;        // fourth moments are logged, not gated
};

inline FormulaCheck make_check(const std::string& name, double closed, const arma::vec& samples)
{
    FormulaCheck c;
    c.name = name;
    c.closed = closed;
    c.oracle = arma::mean(samples);
    c.oracle_se = standard_error(samples);
    const double slack = 3.0 * std::max(c.oracle_se, 1e-12 * std::abs(c.oracle));
    c.ok = std::abs(c.closed - c.oracle) <= slack;
    return c;
}

inline void attach_published(FormulaCheck& c, double published)
{
    c.has_published = true;
    c.published = published;
    const double slack = 3.0 * std::max(c.oracle_se, 1e-12 * std::abs(c.oracle));
    c.published_ok = std::abs(published - c.oracle) <= slack;
}

// Variance check helper: compares a closed-form variance against the sample
// variance, whose standard error is sqrt((m4 - var^2)/T) to first order.
inline FormulaCheck make_var_check(const std::string& name, double closed,
                                   const arma::vec& samples)
{
    FormulaCheck c;
    c.name = name;
    c.closed = closed;
    const double mean = arma::mean(samples);
    const arma::vec centered = samples - mean;
    const double var = arma::accu(arma::square(centered)) /
                       static_cast<double>(samples.n_elem - 1);
    const double m4 = arma::mean(arma::vec(arma::pow(centered, 4)));
    c.oracle = var;
    c.oracle_se = std::sqrt(std::max(0.0, (m4 - var * var) / static_cast<double>(samples.n_elem)));
    const double slack = 3.0 * std::max(c.oracle_se, 1e-12 * std::abs(c.oracle));
    c.ok = std::abs(c.closed - c.oracle) <= slack;
    return c;
}

struct ValidationReport
{
    std::vector<FormulaCheck> checks;
    bool all_consistent_ok() const
    {
        for (const auto& c : checks)
            if (c.gate && !c.ok)
                return false;
        return true;
    }
};

// Validates the closed-form moment engine against brute-force Monte-Carlo on
// one geometry. Fourth-moment and published-variant mismatches are recorded,
// not failed, for the fourth moments; first/second moments must agree.
inline void validate_geometry(const SimulationConfig& cfg, arma::uword geometry_index,
                              arma::uword trials, ValidationReport& report)
{
    SimulationConfig c = cfg;
    const std::uint64_t gs = derive_seed(cfg.seed, {stream::geometry, geometry_index});
    RngStream pick(gs);
    c.m = 2 + static_cast<arma::uword>(pick.uniform() * 30.0);  // <= 32
    c.n = 1 + static_cast<arma::uword>(pick.uniform() * 3.99);  // <= 4
    c.k = 2 + static_cast<arma::uword>(pick.uniform() * 6.99);  // <= 8

    const NetworkGeometry geom = place_uniform(c.geometry_params(), gs);
    const LinkSet links = link_metrics(geom, c.d0_m, c.eta, c.los_convention());
    const EstimatorBank bank = build_estimator_bank(geom, links, c.pilot_config());
    const MomentEngine eng(geom, links);
    const EstMomentEngine est(geom, links, bank);

    arma::vec g00(trials), z0_sq(trials), ghat(trials), gtilde_sq(trials), icross(trials);
    arma::cx_vec g01(trials);
    parallel_for(trials, c.threads, [&](arma::uword t) {
        RngStream rng(derive_seed(gs, {stream::trial, t}));
        const TrialGrams tg = draw_trial_grams(geom, links, &bank, nullptr, rng);
        g00[t] = std::real(tg.G(0, 0));
        g01[t] = tg.G(0, 1);
        z0_sq[t] = c.noise_power * std::norm(tg.Hw[0]);
        ghat[t] = std::real(tg.Ghat(0, 0));
        gtilde_sq[t] = std::norm(tg.Gcross(0, 0) - tg.Ghat(0, 0));
        icross[t] = std::norm(tg.Gcross(0, 1));
    });

    const std::string tag = "g" + std::to_string(geometry_index) + ":";
    const GkkMoments mk = eng.gkk(0);
    report.checks.push_back(make_check(tag + "mean_gkk", mk.mean, g00));
    report.checks.push_back(make_var_check(tag + "var_gkk", mk.variance, g00));
    {
        FormulaCheck second = make_check(tag + "second_gkk", mk.second, arma::square(g00));
        attach_published(second, mk.second_published);
        report.checks.push_back(second);
        FormulaCheck fourth = make_check(tag + "fourth_gkk", mk.fourth, arma::pow(g00, 4));
        attach_published(fourth, mk.fourth_published);
        fourth.gate = false;
        report.checks.push_back(fourth);
    }

    const GklMoments ml = eng.gkl(0, 1);
    report.checks.push_back(make_check(tag + "mean_gkl_re", ml.mean.real(), arma::real(g01)));
    report.checks.push_back(make_check(tag + "mean_gkl_im", ml.mean.imag(), arma::imag(g01)));
    {
        arma::vec asq(trials);
        for (arma::uword t = 0; t < trials; ++t)
            asq[t] = std::norm(g01[t]);
        FormulaCheck second = make_check(tag + "second_gkl", ml.second, asq);
        attach_published(second, std::abs(ml.second_published));
        report.checks.push_back(second);
        arma::vec centered(trials);
        for (arma::uword t = 0; t < trials; ++t)
            centered[t] = std::norm(g01[t] - ml.mean);
        FormulaCheck var = make_check(tag + "var_gkl", ml.variance, centered);
        attach_published(var, std::abs(ml.var_published));
        report.checks.push_back(var);
    }

    // var(z_k): z = sqrt(N0) h^H w has conditional variance N0 ||h||^2, so
    // the sample of N0 |(H^H w)_k|^2 estimates it directly.
    report.checks.push_back(make_check(tag + "var_zk", eng.zk_variance(0, c.noise_power), z0_sq));

    const EstGkkMoments me = est.gkk(0);
    {
        FormulaCheck mean = make_check(tag + "mean_ghat_kk", me.mean, ghat);
        attach_published(mean, me.mean_published);
        report.checks.push_back(mean);
        FormulaCheck second = make_check(tag + "second_ghat_kk", me.second, arma::square(ghat));
        attach_published(second, me.second_published);
        report.checks.push_back(second);
        report.checks.push_back(make_check(tag + "second_gtilde_kk", me.second_gtilde, gtilde_sq));
    }
    report.checks.push_back(
        make_check(tag + "est_interference", est.interference_second(0, 1), icross));
}

inline ValidationReport run_validation(const SimulationConfig& cfg, arma::uword geometries,
                                       arma::uword trials)
{
    ValidationReport report;
    for (arma::uword g = 0; g < geometries; ++g)
        validate_geometry(cfg, g, trials, report);
    return report;
}

inline nlohmann::json validation_json(const ValidationReport& r)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : r.checks)
    {
        nlohmann::json e{{"name", c.name},
                         {"closed", c.closed},
                         {"oracle", c.oracle},
                         {"oracle_se", c.oracle_se},
                         {"ok", c.ok}};
        if (c.has_published)
        {
            e["published"] = c.published;
            e["published_ok"] = c.published_ok;
        }
        j.push_back(e);
    }
    return j;
}

} // namespace cfmimo

#endif

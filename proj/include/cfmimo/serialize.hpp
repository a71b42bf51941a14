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

#ifndef cfmimo_serialize_H
#define cfmimo_serialize_H

#include <charconv>
#include <fstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cfmimo/geometry.hpp"

namespace cfmimo
{

// Shortest round-trip decimal form, locale-independent ('.' decimal).
inline std::string format_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a64(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s)
    {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Geometry <-> JSON (positions in km, heights in m).
inline nlohmann::json geometry_to_json(const NetworkGeometry& geom)
{
    nlohmann::json j;
    j["area_side_km"] = geom.area_side_km;
    j["n_antennas"] = geom.n_antennas;
    j["antenna_spacing_m"] = geom.antenna_spacing_m;
    j["carrier_wavelength_m"] = geom.carrier_wavelength_m;
    j["env"] = {{"alpha", geom.env.alpha},
                {"mu_per_km2", geom.env.mu_per_km2},
                {"gamma_m", geom.env.gamma_m}};
    j["aps"] = nlohmann::json::array();
    for (const auto& ap : geom.aps)
        j["aps"].push_back({{"x_km", ap.x_km},
                            {"y_km", ap.y_km},
                            {"height_m", ap.height_m},
                            {"broadside_rad", ap.broadside_rad},
                            {"gain", ap.gain}});
    j["ues"] = nlohmann::json::array();
    for (const auto& ue : geom.ues)
        j["ues"].push_back(
            {{"x_km", ue.x_km}, {"y_km", ue.y_km}, {"height_m", ue.height_m}, {"gain", ue.gain}});
    return j;
}

inline NetworkGeometry geometry_from_json(const nlohmann::json& j)
{
    NetworkGeometry geom;
    geom.area_side_km = j.at("area_side_km").get<double>();
    geom.n_antennas = j.at("n_antennas").get<arma::uword>();
    geom.antenna_spacing_m = j.at("antenna_spacing_m").get<double>();
    geom.carrier_wavelength_m = j.at("carrier_wavelength_m").get<double>();
    geom.env.alpha = j.at("env").at("alpha").get<double>();
    geom.env.mu_per_km2 = j.at("env").at("mu_per_km2").get<double>();
    geom.env.gamma_m = j.at("env").at("gamma_m").get<double>();
    for (const auto& a : j.at("aps"))
        geom.aps.push_back({a.at("x_km").get<double>(), a.at("y_km").get<double>(),
                            a.at("height_m").get<double>(), a.at("broadside_rad").get<double>(),
                            a.at("gain").get<double>()});
    for (const auto& u : j.at("ues"))
        geom.ues.push_back({u.at("x_km").get<double>(), u.at("y_km").get<double>(),
                            u.at("height_m").get<double>(), u.at("gain").get<double>()});
    geom.validate();
    return geom;
}

inline void save_geometry(const NetworkGeometry& geom, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("save_geometry: cannot open " + path);
    out << geometry_to_json(geom).dump(2) << "\n";
}

inline NetworkGeometry load_geometry(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("load_geometry: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return geometry_from_json(j);
}

} // namespace cfmimo

#endif

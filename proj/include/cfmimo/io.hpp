// SPDX-License-Identifier: Apache-2.0
//
// cfmimo - cell-free massive MIMO IoT simulation and power control
// Copyright (C) 2026 The cfmimo authors
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

#pragma once

#include "common.hpp"
#include "netgen.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iterator>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cfmimo
{
    using json = nlohmann::json;

    /// Shortest text that reads back to the same double.
    inline std::string format_double(double v)
    {
        char buf[32];
        for (int prec = 15; prec <= 17; ++prec)
        {
            std::snprintf(buf, sizeof buf, "%.*g", prec, v);
            if (std::strtod(buf, nullptr) == v)
                break;
        }
        return buf;
    }

    // ---- config ----

    inline std::string to_string(ShadowModel m) { return m == ShadowModel::iid ? "iid" : "correlated"; }

    inline ShadowModel shadow_model_from_string(const std::string &s)
    {
        if (s == "iid")
            return ShadowModel::iid;
        if (s == "correlated")
            return ShadowModel::correlated;
        throw config_error("unknown shadowing model '" + s + "' (expected iid or correlated)");
    }

    namespace detail
    {
        template <class T>
        void read_field(const json &j, const char *key, T &dst)
        {
            if (!j.contains(key))
                return;
            try
            {
                dst = j.at(key).get<T>();
            }
            catch (const json::exception &e)
            {
                throw config_error(std::string("field '") + key + "': " + e.what());
            }
        }

        inline void reject_unknown(const json &j, const std::set<std::string> &known, const std::string &where)
        {
            for (auto it = j.begin(); it != j.end(); ++it)
                if (!known.count(it.key()))
                    throw config_error("unknown field '" + it.key() + "' in " + where);
        }
    }

    /// Omitted fields keep their defaults.
    inline NetworkConfig network_config_from_json(const json &j)
    {
        if (!j.is_object())
            throw config_error("network config must be a JSON object");
        detail::reject_unknown(j,
                               {"M", "K", "K_bar", "area_side_m", "tau", "tau_c", "carrier_hz", "bandwidth_hz",
                                "noise_figure_db", "P_u_mw", "P_p_mw", "P_d_mw", "sigma_sh_db", "shadow",
                                "wrap_around", "seed"},
                               "network config");
        NetworkConfig c;
        detail::read_field(j, "M", c.M);
        detail::read_field(j, "K", c.K);
        detail::read_field(j, "K_bar", c.K_bar);
        detail::read_field(j, "area_side_m", c.area_side_m);
        detail::read_field(j, "tau", c.tau);
        detail::read_field(j, "tau_c", c.tau_c);
        detail::read_field(j, "carrier_hz", c.carrier_hz);
        detail::read_field(j, "bandwidth_hz", c.bandwidth_hz);
        detail::read_field(j, "noise_figure_db", c.noise_figure_db);
        detail::read_field(j, "P_u_mw", c.P_u_mw);
        detail::read_field(j, "P_p_mw", c.P_p_mw);
        detail::read_field(j, "P_d_mw", c.P_d_mw);
        detail::read_field(j, "sigma_sh_db", c.sigma_sh_db);
        detail::read_field(j, "wrap_around", c.wrap_around);
        detail::read_field(j, "seed", c.seed);
        if (j.contains("shadow"))
        {
            const json &s = j.at("shadow");
            if (s.is_string())
                c.shadow.model = shadow_model_from_string(s.get<std::string>());
            else if (s.is_object())
            {
                detail::reject_unknown(s, {"model", "delta", "decorr_dist_m"}, "shadow");
                if (s.contains("model"))
                    c.shadow.model = shadow_model_from_string(s.at("model").get<std::string>());
                detail::read_field(s, "delta", c.shadow.delta);
                detail::read_field(s, "decorr_dist_m", c.shadow.decorr_dist_m);
            }
            else
                throw config_error("field 'shadow' must be a string or an object");
        }
        c.validate();
        return c;
    }

    inline json network_config_to_json(const NetworkConfig &c)
    {
        return json{{"M", c.M},
                    {"K", c.K},
                    {"K_bar", c.K_bar},
                    {"area_side_m", c.area_side_m},
                    {"tau", c.tau},
                    {"tau_c", c.tau_c},
                    {"carrier_hz", c.carrier_hz},
                    {"bandwidth_hz", c.bandwidth_hz},
                    {"noise_figure_db", c.noise_figure_db},
                    {"P_u_mw", c.P_u_mw},
                    {"P_p_mw", c.P_p_mw},
                    {"P_d_mw", c.P_d_mw},
                    {"sigma_sh_db", c.sigma_sh_db},
                    {"shadow",
                     {{"model", to_string(c.shadow.model)},
                      {"delta", c.shadow.delta},
                      {"decorr_dist_m", c.shadow.decorr_dist_m}}},
                    {"wrap_around", c.wrap_around},
                    {"seed", c.seed}};
    }

    inline json read_json_file(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw config_error("cannot open " + path);
        try
        {
            return json::parse(f);
        }
        catch (const json::parse_error &e)
        {
            throw config_error(path + ": " + e.what());
        }
    }

    inline void write_text_file(const std::string &path, const std::string &text)
    {
        std::ofstream f(path, std::ios::binary);
        if (!f)
            throw config_error("cannot write " + path);
        f << text;
    }

    // ---- CSV ----

    /// Quotes a field when it holds a comma, quote or line break.
    inline std::string csv_field(const std::string &s)
    {
        if (s.find_first_of(",\"\r\n") == std::string::npos)
            return s;
        std::string out = "\"";
        for (char ch : s)
        {
            if (ch == '"')
                out += '"';
            out += ch;
        }
        return out + '"';
    }

    class CsvWriter
    {
    public:
        explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row(header); }

        void row(const std::vector<std::string> &fields)
        {
            if (fields.size() != cols_)
                throw dimension_error("CsvWriter: row has " + std::to_string(fields.size()) + " fields, expected " +
                                      std::to_string(cols_));
            for (std::size_t i = 0; i < fields.size(); ++i)
            {
                if (i)
                    text_ += ',';
                text_ += csv_field(fields[i]);
            }
            text_ += "\r\n";
        }

        const std::string &str() const { return text_; }
        void save(const std::string &path) const { write_text_file(path, text_); }

    private:
        std::size_t cols_;
        std::string text_;
    };

    // ---- empirical CDF ----

    struct CdfPoint
    {
        double value = 0.0;
        double fraction = 0.0;
    };

    /// Sorted samples paired with i/N.
    inline std::vector<CdfPoint> emit_cdf(std::span<const double> samples)
    {
        if (samples.empty())
            throw domain_error("emit_cdf: no samples");
        std::vector<double> v(samples.begin(), samples.end());
        std::stable_sort(v.begin(), v.end());
        std::vector<CdfPoint> out(v.size());
        const double n = static_cast<double>(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            out[i] = {v[i], static_cast<double>(i + 1) / n};
        return out;
    }

    /// Fraction of samples <= x.
    inline double cdf_at(const std::vector<CdfPoint> &cdf, double x)
    {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), x,
                                         [](double a, const CdfPoint &p) { return a < p.value; });
        return it == cdf.begin() ? 0.0 : std::prev(it)->fraction;
    }

    inline double median(std::vector<double> v)
    {
        if (v.empty())
            throw domain_error("median: no samples");
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
}

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
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace cfmimo
{
    struct Point2
    {
        double x = 0.0;
        double y = 0.0;
        bool operator==(const Point2 &) const = default;
        auto operator<=>(const Point2 &) const = default;
    };

    enum class ShadowModel
    {
        iid,
        correlated
    };

    struct ShadowingConfig
    {
        ShadowModel model = ShadowModel::iid;
        double delta = 0.5;          // weight of the AP-side component
        double decorr_dist_m = 100.0; // decorrelation distance of both fields
    };

    /// Three-slope path loss. Distances in meters; `loss_db` is the COST-231 Hata
    /// constant for distances in km.
    struct PathLossModel
    {
        double loss_db = 140.7;
        double d0_m = 10.0;
        double d1_m = 50.0;

        /// COST-231 Hata constant term (medium city) at carrier `carrier_hz`.
        static PathLossModel cost231_hata(double carrier_hz, double ap_height_m = 15.0,
                                          double dev_height_m = 1.65)
        {
            const double f = carrier_hz / 1e6;
            const double lf = std::log10(f);
            const double a_hm = (1.1 * lf - 0.7) * dev_height_m - (1.56 * lf - 0.8);
            PathLossModel pl;
            pl.loss_db = 46.3 + 33.9 * lf - 13.82 * std::log10(ap_height_m) - a_hm;
            return pl;
        }

        /// Path loss in dB (a negative number).
        double gain_db(double d_m) const
        {
            if (!(d_m >= 0.0))
                throw domain_error("path_loss: distance must be non-negative");
            if (d_m <= d0_m)
                return -loss_db - 15.0 * std::log10(d1_m / 1000.0) - 20.0 * std::log10(d0_m / 1000.0);
            if (d_m <= d1_m)
                return -loss_db - 15.0 * std::log10(d1_m / 1000.0) - 20.0 * std::log10(d_m / 1000.0);
            return -loss_db - 35.0 * std::log10(d_m / 1000.0);
        }

        double gain(double d_m) const { return std::pow(10.0, gain_db(d_m) / 10.0); }
    };

    /// Linear-scale path loss with the default (1.9 GHz) model.
    inline double path_loss(double d_m, const PathLossModel &model = PathLossModel::cost231_hata(1.9e9))
    {
        return model.gain(d_m);
    }

    /// Toroidal distance on the square [0, side]^2.
    inline double wrap_distance(Point2 p, Point2 q, double side)
    {
        double dx = std::abs(p.x - q.x);
        double dy = std::abs(p.y - q.y);
        dx = std::min(dx, side - dx);
        dy = std::min(dy, side - dy);
        return std::hypot(dx, dy);
    }

    inline double euclid_distance(Point2 p, Point2 q) { return std::hypot(p.x - q.x, p.y - q.y); }

    struct NetworkConfig
    {
        std::size_t M = 64;
        std::size_t K = 16;
        std::size_t K_bar = 0; // metadata; 0 means "equal to K"
        double area_side_m = 1000.0;
        std::size_t tau = 16;
        std::size_t tau_c = 200;
        double carrier_hz = 1.9e9;
        double bandwidth_hz = 20e6;
        double noise_figure_db = 9.0;
        double P_u_mw = 20.0;
        double P_p_mw = 20.0;
        double P_d_mw = 200.0;
        double sigma_sh_db = 8.0;
        ShadowingConfig shadow{};
        bool wrap_around = true;
        std::uint64_t seed = 1;

        void validate() const
        {
            detail::require(K >= 1, "NetworkConfig: K must be >= 1");
            detail::require(M >= K, "NetworkConfig: M must be >= K");
            detail::require(K_bar == 0 || K_bar >= K, "NetworkConfig: K_bar must be >= K");
            detail::require(tau >= 1, "NetworkConfig: tau must be >= 1");
            detail::require(tau_c > tau, "NetworkConfig: tau_c must exceed tau");
            detail::require(area_side_m > 0.0, "NetworkConfig: area_side_m must be > 0");
            detail::require(P_u_mw > 0.0 && P_p_mw > 0.0 && P_d_mw > 0.0,
                            "NetworkConfig: transmit powers must be > 0");
            detail::require(bandwidth_hz > 0.0 && carrier_hz > 0.0,
                            "NetworkConfig: carrier and bandwidth must be > 0");
            detail::require(sigma_sh_db >= 0.0, "NetworkConfig: sigma_sh_db must be >= 0");
            detail::require(shadow.delta >= 0.0 && shadow.delta <= 1.0,
                            "NetworkConfig: shadowing delta must lie in [0, 1]");
            detail::require(shadow.decorr_dist_m > 0.0,
                            "NetworkConfig: decorrelation distance must be > 0");
        }

        /// Thermal noise power in dBm: -174 dBm/Hz + 10 log10(BW) + NF.
        double noise_power_dbm() const { return -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db; }
        double noise_power_mw() const { return std::pow(10.0, noise_power_dbm() / 10.0); }

        double rho_u() const { return P_u_mw / noise_power_mw(); }
        double rho_p() const { return P_p_mw / noise_power_mw(); }
        double rho_d() const { return P_d_mw / noise_power_mw(); }

        std::size_t total_devices() const { return K_bar == 0 ? K : K_bar; }

        PathLossModel path_loss_model() const { return PathLossModel::cost231_hata(carrier_hz); }

        double distance(Point2 p, Point2 q) const
        {
            return wrap_around ? wrap_distance(p, q, area_side_m) : euclid_distance(p, q);
        }
    };

    struct NetworkRealization
    {
        std::vector<Point2> ap_positions;
        std::vector<Point2> dev_positions;
        MatrixXd path_loss; // M x K, linear
        MatrixXd shadowing; // M x K, linear
        MatrixXd beta;      // M x K, path_loss .* shadowing

        std::size_t M() const { return ap_positions.size(); }
        std::size_t K() const { return dev_positions.size(); }
    };

    namespace detail
    {
        // Zero-mean unit-variance Gaussian field with covariance 2^(-dist/decorr) over
        // the given points. Coincident points share one value.
        template <class DistFn>
        VectorXd gaussian_field(const std::vector<Point2> &points, double decorr_dist_m, DistFn &&dist, Rng &rng)
        {
            std::map<Point2, Index> unique_index;
            std::vector<Point2> unique_points;
            std::vector<Index> slot(points.size());
            for (std::size_t i = 0; i < points.size(); ++i)
            {
                auto [it, inserted] = unique_index.try_emplace(points[i], static_cast<Index>(unique_points.size()));
                if (inserted)
                    unique_points.push_back(points[i]);
                slot[i] = it->second;
            }

            const Index n = static_cast<Index>(unique_points.size());
            MatrixXd cov(n, n);
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j <= i; ++j)
                {
                    const double c = std::exp2(-dist(unique_points[i], unique_points[j]) / decorr_dist_m);
                    cov(i, j) = c;
                    cov(j, i) = c;
                }

            double jitter = 1e-10;
            Eigen::LLT<MatrixXd> llt;
            bool ok = false;
            for (int attempt = 0; attempt < 5 && !ok; ++attempt, jitter *= 10.0)
            {
                llt.compute(cov + jitter * MatrixXd::Identity(n, n));
                ok = llt.info() == Eigen::Success;
            }
            if (!ok)
                throw generation_error("correlated_shadowing: covariance is not positive definite");

            VectorXd white(n);
            for (Index i = 0; i < n; ++i)
                white(i) = rng.gaussian();
            const VectorXd field = llt.matrixL() * white;

            VectorXd out(static_cast<Index>(points.size()));
            for (std::size_t i = 0; i < points.size(); ++i)
                out(static_cast<Index>(i)) = field(slot[i]);
            return out;
        }
    }

    struct ShadowingDraw
    {
        MatrixXd z;    // M x K standard normal (marginally)
        MatrixXd gain; // 10^(sigma z / 10)
    };

    /// Two-component shadowing: z_mk = sqrt(delta) a_m + sqrt(1 - delta) b_k.
    template <class DistFn>
    ShadowingDraw correlated_shadowing(const std::vector<Point2> &ap_positions,
                                       const std::vector<Point2> &dev_positions, double sigma_sh_db,
                                       double delta, double decorr_dist_m, DistFn &&dist, Rng &rng)
    {
        if (!(delta >= 0.0 && delta <= 1.0))
            throw domain_error("correlated_shadowing: delta must lie in [0, 1]");
        if (!(decorr_dist_m > 0.0))
            throw domain_error("correlated_shadowing: decorrelation distance must be > 0");

        const VectorXd a = detail::gaussian_field(ap_positions, decorr_dist_m, dist, rng);
        const VectorXd b = detail::gaussian_field(dev_positions, decorr_dist_m, dist, rng);

        const Index M = a.size(), K = b.size();
        ShadowingDraw out{MatrixXd(M, K), MatrixXd(M, K)};
        const double wa = std::sqrt(delta), wb = std::sqrt(1.0 - delta);
        for (Index k = 0; k < K; ++k)
            for (Index m = 0; m < M; ++m)
            {
                out.z(m, k) = wa * a(m) + wb * b(k);
                out.gain(m, k) = std::pow(10.0, sigma_sh_db * out.z(m, k) / 10.0);
            }
        return out;
    }

    inline ShadowingDraw iid_shadowing(Index M, Index K, double sigma_sh_db, Rng &rng)
    {
        ShadowingDraw out{MatrixXd(M, K), MatrixXd(M, K)};
        for (Index k = 0; k < K; ++k)
            for (Index m = 0; m < M; ++m)
            {
                out.z(m, k) = rng.gaussian();
                out.gain(m, k) = std::pow(10.0, sigma_sh_db * out.z(m, k) / 10.0);
            }
        return out;
    }

    /// Drops APs and devices uniformly on the square and computes beta = PL * SF.
    inline NetworkRealization generate_network(const NetworkConfig &config, std::uint64_t seed)
    {
        config.validate();
        Rng rng(derive_seed(seed, stream::network));
        const double D = config.area_side_m;

        NetworkRealization net;
        net.ap_positions.resize(config.M);
        net.dev_positions.resize(config.K);
        for (auto &p : net.ap_positions)
            p = {rng.uniform(0.0, D), rng.uniform(0.0, D)};
        for (auto &p : net.dev_positions)
            p = {rng.uniform(0.0, D), rng.uniform(0.0, D)};

        const Index M = static_cast<Index>(config.M), K = static_cast<Index>(config.K);
        const PathLossModel pl = config.path_loss_model();
        net.path_loss.resize(M, K);
        for (Index k = 0; k < K; ++k)
            for (Index m = 0; m < M; ++m)
                net.path_loss(m, k) = pl.gain(config.distance(net.ap_positions[m], net.dev_positions[k]));

        if (config.sigma_sh_db == 0.0)
            net.shadowing = MatrixXd::Ones(M, K);
        else if (config.shadow.model == ShadowModel::iid)
            net.shadowing = iid_shadowing(M, K, config.sigma_sh_db, rng).gain;
        else
            net.shadowing = correlated_shadowing(
                                net.ap_positions, net.dev_positions, config.sigma_sh_db, config.shadow.delta,
                                config.shadow.decorr_dist_m,
                                [&](Point2 p, Point2 q) { return config.distance(p, q); }, rng)
                                .gain;

        net.beta = net.path_loss.cwiseProduct(net.shadowing);
        return net;
    }

    inline NetworkRealization generate_network(const NetworkConfig &config)
    {
        return generate_network(config, config.seed);
    }
}

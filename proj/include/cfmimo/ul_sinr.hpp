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

#include "channel.hpp"
#include "common.hpp"
#include "estimator.hpp"
#include "netgen.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace cfmimo
{
    /// Checks 0 <= eta_k <= 1 (no clamping anywhere in the library).
    inline void validate_ul_power(const VectorXd &eta, Index K)
    {
        detail::require_shape(eta.size() == K, "UL power vector must have K entries");
        for (Index k = 0; k < K; ++k)
            if (!(eta(k) >= 0.0 && eta(k) <= 1.0))
                throw domain_error("UL power coefficient outside [0,1] at device " + std::to_string(k));
    }

    /// Diagonal of D = rho_u sum_k eta_k (B_k - Gamma_k) + I.
    inline VectorXd d_matrix(const MatrixXd &gamma, const MatrixXd &beta, const VectorXd &eta, double rho_u)
    {
        detail::require_shape(gamma.rows() == beta.rows() && gamma.cols() == beta.cols(),
                              "d_matrix: gamma and beta shapes differ");
        detail::require_shape(eta.size() == beta.cols(), "d_matrix: eta must have K entries");
        return (rho_u * ((beta - gamma) * eta)).array() + 1.0;
    }

    namespace detail
    {
        // Omega = rho_u G diag(eta) G^H + D, returned as its Cholesky factorization.
        inline Eigen::LLT<MatrixXcd> omega_factor(const MatrixXcd &g_hat, const VectorXd &d, const VectorXd &eta,
                                                  double rho_u)
        {
            MatrixXcd omega = g_hat * (rho_u * eta).cast<Complex>().asDiagonal() * g_hat.adjoint();
            omega.diagonal() += d.cast<Complex>();
            Eigen::LLT<MatrixXcd> llt(omega);
            if (llt.info() != Eigen::Success)
                throw conditioning_error("Omega is not positive definite");
            return llt;
        }

        inline void check_ul_shapes(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                    const VectorXd &eta)
        {
            require_shape(g_hat.rows() == beta.rows() && g_hat.cols() == beta.cols() &&
                              gamma.rows() == beta.rows() && gamma.cols() == beta.cols(),
                          "UL SINR: g_hat, gamma and beta must all be M x K");
            validate_ul_power(eta, beta.cols());
        }
    }

    /// v_k = sqrt(rho_u eta_k) Omega^{-1} g_hat_k.
    inline VectorXcd mmse_receiver(const MatrixXcd &g_hat, const VectorXd &eta, const VectorXd &d, double rho_u,
                                   Index k)
    {
        detail::require_shape(d.size() == g_hat.rows(), "mmse_receiver: d must have M entries");
        validate_ul_power(eta, g_hat.cols());
        const auto llt = detail::omega_factor(g_hat, d, eta, rho_u);
        VectorXcd v = llt.solve(g_hat.col(k));
        return v * std::sqrt(rho_u * eta(k));
    }

    /// SINR of device k for an arbitrary combining vector v:
    /// rho eta_k |v^H g_k|^2 / v^H (rho sum_{j != k} eta_j g_j g_j^H + D) v.
    inline double ul_sinr_quotient(const VectorXcd &v, const MatrixXcd &g_hat, const VectorXd &eta,
                                   const VectorXd &d, double rho_u, Index k)
    {
        const VectorXcd proj = g_hat.adjoint() * v; // g_j^H v
        double interference = (v.cwiseAbs2().array() * d.array()).sum();
        for (Index j = 0; j < g_hat.cols(); ++j)
            if (j != k)
                interference += rho_u * eta(j) * std::norm(proj(j));
        const double signal = rho_u * eta(k) * std::norm(proj(k));
        if (signal == 0.0)
            return 0.0;
        return signal / interference;
    }

    namespace detail
    {
        // MMSE SINR with per-device receive SNRs p_k = rho_k eta_k.
        inline VectorXd mmse_sinr_powers(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                         const VectorXd &p)
        {
            const VectorXd d = (((beta - gamma) * p).array() + 1.0).matrix();
            const auto llt = omega_factor(g_hat, d, p, 1.0);
            const MatrixXcd x = llt.solve(g_hat);
            VectorXd sinr(g_hat.cols());
            for (Index k = 0; k < g_hat.cols(); ++k)
            {
                const double q = p(k) * g_hat.col(k).dot(x.col(k)).real();
                if (!(q < 1.0) || q < 0.0)
                    throw conditioning_error("exact_sinr_mmse: q_k = " + std::to_string(q) +
                                             " outside [0,1) at device " + std::to_string(k));
                sinr(k) = q / (1.0 - q);
            }
            return sinr;
        }
    }

    /// Exact MMSE SINR q/(1 - q), q_k = rho eta_k g_k^H Omega^{-1} g_k.
    inline VectorXd exact_sinr_mmse(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                    const VectorXd &eta, double rho_u)
    {
        detail::check_ul_shapes(g_hat, gamma, beta, eta);
        return detail::mmse_sinr_powers(g_hat, gamma, beta, rho_u * eta);
    }

    /// Maximum-ratio combining (v_k = g_hat_k) in the general SINR quotient.
    inline VectorXd mr_sinr(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                            const VectorXd &eta, double rho_u)
    {
        detail::check_ul_shapes(g_hat, gamma, beta, eta);
        const VectorXd d = d_matrix(gamma, beta, eta, rho_u);
        const MatrixXcd gram = g_hat.adjoint() * g_hat;
        VectorXd sinr(g_hat.cols());
        for (Index k = 0; k < g_hat.cols(); ++k)
        {
            const double signal = rho_u * eta(k) * std::norm(gram(k, k));
            if (signal == 0.0)
            {
                sinr(k) = 0.0;
                continue;
            }
            double interference = (g_hat.col(k).cwiseAbs2().array() * d.array()).sum();
            for (Index j = 0; j < g_hat.cols(); ++j)
                if (j != k)
                    interference += rho_u * eta(j) * std::norm(gram(j, k));
            sinr(k) = signal / interference;
        }
        return sinr;
    }

    struct RmOptions
    {
        double tol = 1e-9;
        std::size_t max_iter = 5000;
    };

    struct RmState
    {
        VectorXd e;      // fixed-point values
        VectorXd t_diag; // diagonal of T
        std::size_t iterations = 0;
        double residual = 0.0;
        std::vector<double> residual_trace;
    };

    struct RmResult
    {
        VectorXd sinr;
        RmState state;
    };

    struct RmPerDeviceResult
    {
        VectorXd sinr;
        std::vector<RmState> states; // one per device, e and t_diag with device k excluded
    };

    namespace detail
    {
        // Fixed point e_j = (rho eta_j / M) tr(Gamma_j T(e)) over the devices in `active`,
        // T(e) = ((rho/M) sum_j eta_j Gamma_j / (1 + e_j) + D/M)^{-1}, started at e = M.
        // Everything is held as M-vectors.
        inline RmState rm_fixed_point(const MatrixXd &gamma, const VectorXd &d, const VectorXd &eta, double rho_u,
                                      const std::vector<Index> &active, const RmOptions &opt)
        {
            const Index M = gamma.rows(), K = gamma.cols();
            const double Md = static_cast<double>(M);
            RmState st;
            st.e = VectorXd::Zero(K);
            for (Index j : active)
                st.e(j) = Md;
            VectorXd tinv(M);
            auto compute_t = [&](const VectorXd &e)
            {
                tinv = d / Md;
                for (Index j : active)
                    if (eta(j) > 0.0)
                        tinv += (rho_u * eta(j) / (Md * (1.0 + e(j)))) * gamma.col(j);
                return tinv.cwiseInverse();
            };

            VectorXd e_next = st.e;
            for (st.iterations = 1; st.iterations <= opt.max_iter; ++st.iterations)
            {
                st.t_diag = compute_t(st.e);
                double res = 0.0;
                for (Index j : active)
                {
                    e_next(j) = rho_u * eta(j) / Md * gamma.col(j).dot(st.t_diag);
                    res = std::max(res, std::abs(e_next(j) - st.e(j)));
                }
                st.e.swap(e_next);
                st.residual = res;
                st.residual_trace.push_back(res);
                if (res <= opt.tol)
                {
                    st.t_diag = compute_t(st.e);
                    return st;
                }
            }
            throw convergence_error("RM fixed point did not converge", opt.max_iter, st.residual);
        }
    }

    /// RM Approximation 1: SINR_k = rho eta_k tr(Gamma_k T)/M with a shared T.
    inline RmResult rm_ap1(const MatrixXd &gamma, const MatrixXd &beta, const VectorXd &eta, double rho_u,
                           const RmOptions &opt = {})
    {
        detail::require_shape(gamma.rows() == beta.rows() && gamma.cols() == beta.cols(),
                              "rm_ap1: gamma and beta shapes differ");
        validate_ul_power(eta, beta.cols());
        if (!(opt.tol > 0.0))
            throw domain_error("rm_ap1: tol must be > 0");
        const Index M = beta.rows(), K = beta.cols();
        const VectorXd d = d_matrix(gamma, beta, eta, rho_u);
        std::vector<Index> active(static_cast<std::size_t>(K));
        for (Index k = 0; k < K; ++k)
            active[k] = k;
        RmResult out{VectorXd(K), detail::rm_fixed_point(gamma, d, eta, rho_u, active, opt)};
        for (Index k = 0; k < K; ++k)
            out.sinr(k) = rho_u * eta(k) * gamma.col(k).dot(out.state.t_diag) / static_cast<double>(M);
        return out;
    }

    /// RM Approximation 2: per-device T_k with device k excluded from the interference sum.
    inline RmPerDeviceResult rm_ap2(const MatrixXd &gamma, const MatrixXd &beta, const VectorXd &eta, double rho_u,
                                    const RmOptions &opt = {})
    {
        detail::require_shape(gamma.rows() == beta.rows() && gamma.cols() == beta.cols(),
                              "rm_ap2: gamma and beta shapes differ");
        validate_ul_power(eta, beta.cols());
        if (!(opt.tol > 0.0))
            throw domain_error("rm_ap2: tol must be > 0");
        const Index M = beta.rows(), K = beta.cols();
        const VectorXd d = d_matrix(gamma, beta, eta, rho_u);
        RmPerDeviceResult out{VectorXd(K), {}};
        out.states.reserve(static_cast<std::size_t>(K));
        for (Index k = 0; k < K; ++k)
        {
            std::vector<Index> others;
            for (Index j = 0; j < K; ++j)
                if (j != k)
                    others.push_back(j);
            RmState st;
            if (others.empty())
            {
                st.e = VectorXd::Zero(K);
                st.t_diag = (d / static_cast<double>(M)).cwiseInverse();
            }
            else
                st = detail::rm_fixed_point(gamma, d, eta, rho_u, others, opt);
            out.sinr(k) = rho_u * eta(k) * gamma.col(k).dot(st.t_diag) / static_cast<double>(M);
            out.states.push_back(std::move(st));
        }
        return out;
    }

    /// BW (tau_c - tau) / (2 tau_c), the rate-to-throughput factor in bits/s per bit/s/Hz.
    inline double throughput_factor(const NetworkConfig &config)
    {
        const double tc = static_cast<double>(config.tau_c);
        return config.bandwidth_hz * (tc - static_cast<double>(config.tau)) / (2.0 * tc);
    }

    enum class UlReceiver
    {
        mmse,
        mr
    };

    enum class EstimatorKind
    {
        lmmse,
        projection
    };

    struct UlRateOptions
    {
        std::size_t n_draws = 200;
        UlReceiver receiver = UlReceiver::mmse;
        EstimatorKind estimator = EstimatorKind::lmmse;
        std::size_t threads = 0;
    };

    struct UlRateResult
    {
        VectorXd rate;       // bits/s/Hz, mean over draws
        VectorXd throughput; // bits/s
        VectorXd mean_eta;   // eta averaged over draws (differs from eta only for per-block control)
    };

    /// Power control hook evaluated once per coherence block from the estimates.
    using UlPowerFn = std::function<VectorXd(const MatrixXcd &g_hat, const EstimationResult &est)>;

    inline EstimationResult make_estimator(EstimatorKind kind, const MatrixXcd &psi, const MatrixXd &beta,
                                           double rho_p)
    {
        return kind == EstimatorKind::lmmse ? lmmse_projections(psi, beta, rho_p)
                                            : projection_baseline(psi, beta, rho_p);
    }

    /// Monte Carlo ergodic rate over fresh (h, W) draws. Draw i uses the seed
    /// derive_seed(seed, stream::small_scale, i), so results do not depend on scheduling.
    inline UlRateResult achievable_rate_mc(const MatrixXd &beta, const PilotSet &pilots, const UlPowerFn &power,
                                           const NetworkConfig &config, std::uint64_t seed,
                                           const UlRateOptions &opt = {})
    {
        if (opt.n_draws < 1)
            throw domain_error("achievable_rate_mc: n_draws must be >= 1");
        detail::require_shape(pilots.K() == beta.cols(), "achievable_rate_mc: pilots and beta disagree on K");
        const Index K = beta.cols();
        const double rho_u = config.rho_u(), rho_p = config.rho_p();
        const EstimationResult est = make_estimator(opt.estimator, pilots.psi, beta, rho_p);

        const std::size_t n = opt.n_draws;
        std::vector<double> rates(n * static_cast<std::size_t>(K)), etas(rates.size());
        parallel_for(
            n,
            [&](std::size_t i)
            {
                Rng rng(derive_seed(seed, stream::small_scale, i));
                const ChannelDraw ch = draw_channel(beta, rng);
                const ReceivedPilots rx = receive_pilots(pilots.psi, ch.g, rho_p, rng);
                const MatrixXcd g_hat = estimate_channels(est, rx.y);
                const VectorXd eta = power(g_hat, est);
                const VectorXd sinr = opt.receiver == UlReceiver::mmse
                                          ? exact_sinr_mmse(g_hat, est.gamma, beta, eta, rho_u)
                                          : mr_sinr(g_hat, est.gamma, beta, eta, rho_u);
                for (Index k = 0; k < K; ++k)
                {
                    rates[static_cast<std::size_t>(k) * n + i] = std::log2(1.0 + sinr(k));
                    etas[static_cast<std::size_t>(k) * n + i] = eta(k);
                }
            },
            opt.threads);

        UlRateResult out{VectorXd(K), VectorXd(K), VectorXd(K)};
        const double factor = throughput_factor(config);
        for (Index k = 0; k < K; ++k)
        {
            const std::span<const double> rk(rates.data() + static_cast<std::size_t>(k) * n, n);
            const std::span<const double> ek(etas.data() + static_cast<std::size_t>(k) * n, n);
            out.rate(k) = pairwise_sum(rk) / static_cast<double>(n);
            out.mean_eta(k) = pairwise_sum(ek) / static_cast<double>(n);
            out.throughput(k) = factor * out.rate(k);
        }
        return out;
    }

    inline UlRateResult achievable_rate_mc(const MatrixXd &beta, const PilotSet &pilots, const VectorXd &eta,
                                           const NetworkConfig &config, std::uint64_t seed,
                                           const UlRateOptions &opt = {})
    {
        validate_ul_power(eta, beta.cols());
        return achievable_rate_mc(
            beta, pilots, [&](const MatrixXcd &, const EstimationResult &) { return eta; }, config, seed, opt);
    }
}

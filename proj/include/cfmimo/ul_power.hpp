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
#include "ul_sinr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace cfmimo
{
    /// Rate weights u (unit norm) and power weights nu (rho'_k = rho_u nu_k).
    struct ControlWeights
    {
        VectorXd u;
        VectorXd nu;

        Index K() const { return u.size(); }

        void validate() const
        {
            detail::require_shape(nu.size() == u.size(), "ControlWeights: u and nu sizes differ");
            if ((u.array() < 0.0).any())
                throw domain_error("ControlWeights: u must be non-negative");
            if ((nu.array() <= 0.0).any())
                throw domain_error("ControlWeights: nu must be positive");
            if (std::abs(u.norm() - 1.0) > 1e-12)
                throw domain_error("ControlWeights: u must have unit norm");
            if (!(u.array() > 0.0).any())
                throw domain_error("ControlWeights: at least one u_k must be positive");
        }
    };

    inline ControlWeights uniform_weights(Index K)
    {
        return {VectorXd::Constant(K, 1.0 / std::sqrt(static_cast<double>(K))), VectorXd::Ones(K)};
    }

    /// Weights with u_k = u_p on the devices flagged in `poor` and u_g elsewhere,
    /// u_p^2 K_p + u_g^2 (K - K_p) = 1.
    inline ControlWeights weights_for_poor(const std::vector<bool> &poor, double u_p)
    {
        const Index K = static_cast<Index>(poor.size());
        const Index K_p = static_cast<Index>(std::count(poor.begin(), poor.end(), true));
        if (K < 1 || K_p >= K)
            throw domain_error("build_weights: need 0 <= K_p < K");
        if (u_p < 0.0 || u_p * u_p * static_cast<double>(K_p) >= 1.0)
            throw domain_error("build_weights: u_p out of range");
        const double u_g = std::sqrt((1.0 - u_p * u_p * static_cast<double>(K_p)) / static_cast<double>(K - K_p));
        ControlWeights w{VectorXd(K), VectorXd::Ones(K)};
        for (Index k = 0; k < K; ++k)
            w.u(k) = poor[k] ? u_p : u_g;
        return w;
    }

    /// The first K_p devices get weight u_p.
    inline ControlWeights build_weights(Index K, Index K_p, double u_p)
    {
        if (K_p < 0 || K_p >= K)
            throw domain_error("build_weights: need 0 <= K_p < K");
        std::vector<bool> poor(static_cast<std::size_t>(K), false);
        for (Index k = 0; k < K_p; ++k)
            poor[k] = true;
        return weights_for_poor(poor, u_p);
    }

    /// Flags the K_p devices with the largest power coefficients (ties broken by index).
    inline std::vector<bool> largest_power_devices(const VectorXd &eta, Index K_p)
    {
        std::vector<Index> idx(static_cast<std::size_t>(eta.size()));
        std::iota(idx.begin(), idx.end(), Index{0});
        std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return eta(a) > eta(b); });
        std::vector<bool> poor(idx.size(), false);
        for (Index i = 0; i < K_p && i < eta.size(); ++i)
            poor[idx[i]] = true;
        return poor;
    }

    struct PcOptions
    {
        double eps = 1e-9;
        std::size_t max_iter = 500;
        RmOptions rm{};
    };

    enum class PcEngine
    {
        exact,
        rm
    };

    struct PcResult
    {
        VectorXd eta; // empty when infeasible
        std::size_t iterations = 0;
        bool converged = false;
        bool feasible = true;
        VectorXd achieved; // SINR under the algorithm's engine
        double alpha_final = 0.0;
        VectorXd u;
        std::vector<bool> poor;
        int passes = 1;
        std::vector<Index> violating;
        std::vector<double> trace; // residual per iteration
    };

    namespace detail
    {
        inline VectorXd effective_rho(const ControlWeights &w, double rho_u) { return rho_u * w.nu; }

        // Sum_j c_j J_j + I with J_j = g_j g_j^H + B_j - Gamma_j, factored.
        inline Eigen::LLT<MatrixXcd> j_system(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                              const VectorXd &c)
        {
            MatrixXcd A = g_hat * c.cast<Complex>().asDiagonal() * g_hat.adjoint();
            A.diagonal() += (((beta - gamma) * c).array() + 1.0).matrix().cast<Complex>();
            Eigen::LLT<MatrixXcd> llt(A);
            if (llt.info() != Eigen::Success)
                throw conditioning_error("power control: system matrix not positive definite");
            return llt;
        }

        // d_k = rho'_k g_k^H (sum_j c_j J_j + I)^{-1} g_k
        inline VectorXd d_update(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                 const VectorXd &rho_eff, const VectorXd &c)
        {
            const auto llt = j_system(g_hat, gamma, beta, c);
            const MatrixXcd x = llt.solve(g_hat);
            VectorXd d(g_hat.cols());
            for (Index k = 0; k < g_hat.cols(); ++k)
                d(k) = rho_eff(k) * g_hat.col(k).dot(x.col(k)).real();
            return d;
        }

        // min over devices with u_k > 0 of num_k / u_k
        inline double weighted_min(const VectorXd &num, const VectorXd &u)
        {
            double best = std::numeric_limits<double>::infinity();
            for (Index k = 0; k < u.size(); ++k)
                if (u(k) > 0.0)
                    best = std::min(best, num(k) / u(k));
            return best;
        }

        // eta_k = min_j(x_j/u_j) / (x_k/u_k); exactly 1 at the minimizer.
        inline VectorXd ratio_eta(const VectorXd &x, const VectorXd &u)
        {
            const double best = weighted_min(x, u);
            VectorXd eta = VectorXd::Zero(u.size());
            for (Index k = 0; k < u.size(); ++k)
                if (u(k) > 0.0)
                    eta(k) = best / (x(k) / u(k));
            return eta;
        }

        inline RmResult rm_ap1_powers(const MatrixXd &gamma, const MatrixXd &beta, const VectorXd &p,
                                      const RmOptions &opt)
        {
            const Index M = beta.rows(), K = beta.cols();
            const VectorXd d = (((beta - gamma) * p).array() + 1.0).matrix();
            std::vector<Index> active(static_cast<std::size_t>(K));
            std::iota(active.begin(), active.end(), Index{0});
            RmResult out{VectorXd(K), rm_fixed_point(gamma, d, p, 1.0, active, opt)};
            for (Index k = 0; k < K; ++k)
                out.sinr(k) = p(k) * gamma.col(k).dot(out.state.t_diag) / static_cast<double>(M);
            return out;
        }

        // (alpha/M) sum_k (rho w_k / tr_k) (beta_k - xi_k/(1+xi_k) gamma_k) + 1/M, inverted.
        inline VectorXd t_update(const MatrixXd &gamma, const MatrixXd &beta, const VectorXd &weight,
                                 const VectorXd &xi, double alpha, const VectorXd &tr)
        {
            const Index M = beta.rows();
            const double Md = static_cast<double>(M);
            VectorXd tinv = VectorXd::Constant(M, 1.0 / Md);
            for (Index k = 0; k < beta.cols(); ++k)
            {
                if (weight(k) == 0.0)
                    continue;
                const double coef = alpha / Md * weight(k) / tr(k);
                const double shrink = xi(k) / (1.0 + xi(k));
                tinv += coef * (beta.col(k) - shrink * gamma.col(k));
            }
            return tinv.cwiseInverse();
        }

        inline void check_pc_inputs(const MatrixXd &gamma, const MatrixXd &beta, const ControlWeights &w,
                                    const PcOptions &opt)
        {
            require_shape(gamma.rows() == beta.rows() && gamma.cols() == beta.cols(),
                          "power control: gamma and beta shapes differ");
            require_shape(w.K() == beta.cols(), "power control: weights must have K entries");
            w.validate();
            if (!(opt.eps > 0.0))
                throw domain_error("power control: eps must be > 0");
        }

        // Budget check with a 1e-6 allowance for the device that ends at full power;
        // entries inside the allowance are set to 1.
        inline bool in_unit_box(VectorXd &eta, std::vector<Index> *violating = nullptr)
        {
            constexpr double slack = 1e-6;
            bool ok = true;
            for (Index k = 0; k < eta.size(); ++k)
            {
                if (eta(k) > 1.0 && eta(k) <= 1.0 + slack)
                    eta(k) = 1.0;
                if (!(eta(k) >= 0.0 && eta(k) <= 1.0))
                {
                    ok = false;
                    if (violating)
                        violating->push_back(k);
                }
            }
            return ok;
        }
    }

    /// Max-min power control on the exact MMSE SINR (fixed point on d).
    inline PcResult maxmin_exact(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                 const ControlWeights &w, double rho_u, const PcOptions &opt = {})
    {
        detail::check_pc_inputs(gamma, beta, w, opt);
        detail::require_shape(g_hat.rows() == beta.rows() && g_hat.cols() == beta.cols(),
                              "maxmin_exact: g_hat must be M x K");
        const VectorXd rho_eff = detail::effective_rho(w, rho_u);
        PcResult out;
        out.u = w.u;

        VectorXd d = detail::d_update(g_hat, gamma, beta, rho_eff, rho_eff);
        for (out.iterations = 1; out.iterations <= opt.max_iter; ++out.iterations)
        {
            const double alpha = detail::weighted_min(d, w.u);
            const VectorXd c = alpha * rho_eff.cwiseProduct(w.u).cwiseQuotient(d);
            const VectorXd d_next = detail::d_update(g_hat, gamma, beta, rho_eff, c);
            const double res = (d_next - d).cwiseAbs().maxCoeff();
            out.trace.push_back(res);
            d = d_next;
            if (res <= opt.eps)
            {
                out.converged = true;
                break;
            }
        }
        if (!out.converged)
            throw convergence_error("maxmin_exact: no convergence (weighting likely infeasible)", opt.max_iter,
                                    out.trace.back());
        out.alpha_final = detail::weighted_min(d, w.u);
        out.eta = detail::ratio_eta(d, w.u);
        out.achieved = detail::mmse_sinr_powers(g_hat, gamma, beta, rho_eff.cwiseProduct(out.eta));
        return out;
    }

    /// Max-min power control on RM Approximation 1 (fixed point on diag T).
    inline PcResult maxmin_rm(const MatrixXd &gamma, const MatrixXd &beta, const ControlWeights &w, double rho_u,
                              const PcOptions &opt = {})
    {
        detail::check_pc_inputs(gamma, beta, w, opt);
        const Index M = beta.rows(), K = beta.cols();
        const VectorXd rho_eff = detail::effective_rho(w, rho_u);
        PcResult out;
        out.u = w.u;

        VectorXd t = detail::rm_ap1_powers(gamma, beta, rho_eff, opt.rm).state.t_diag;
        VectorXd tr = gamma.transpose() * t;
        const VectorXd weight = rho_u * w.u;
        for (out.iterations = 1; out.iterations <= opt.max_iter; ++out.iterations)
        {
            const double alpha = detail::weighted_min(w.nu.cwiseProduct(tr), w.u);
            const VectorXd xi = (rho_u * alpha / static_cast<double>(M)) * w.u;
            const VectorXd t_next = detail::t_update(gamma, beta, weight, xi, alpha, tr);
            const double res = (t_next - t).cwiseAbs().maxCoeff();
            out.trace.push_back(res);
            t = t_next;
            tr = gamma.transpose() * t;
            if (res <= opt.eps)
            {
                out.converged = true;
                break;
            }
        }
        if (!out.converged)
            throw convergence_error("maxmin_rm: no convergence (weighting likely infeasible)", opt.max_iter,
                                    out.trace.back());
        const VectorXd ntr = w.nu.cwiseProduct(tr);
        out.alpha_final = detail::weighted_min(ntr, w.u);
        out.eta = detail::ratio_eta(ntr, w.u);
        out.achieved = detail::rm_ap1_powers(gamma, beta, rho_eff.cwiseProduct(out.eta), opt.rm).sinr;
        (void)K;
        return out;
    }

    /// How target-rate algorithms pick the degraded devices when the first pass fails.
    struct PoorDeviceRule
    {
        double u_p = 1e-8;
        // When set, pass 1 is skipped and these devices are degraded directly.
        std::optional<std::vector<bool>> explicit_poor;
    };

    namespace detail
    {
        struct DPassResult
        {
            VectorXd d;
            std::size_t iterations = 0;
            bool converged = false;
            std::vector<double> trace;
        };

        // Fixed point d = f(d) with c_k = alpha rho'_k u_k / d_k (u = 1 in the first pass).
        inline DPassResult target_d_pass(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                         const VectorXd &rho_eff, const VectorXd &u, double alpha,
                                         const PcOptions &opt)
        {
            DPassResult r;
            r.d = d_update(g_hat, gamma, beta, rho_eff, rho_eff);
            for (r.iterations = 1; r.iterations <= opt.max_iter; ++r.iterations)
            {
                VectorXd c = VectorXd::Zero(u.size());
                for (Index k = 0; k < u.size(); ++k)
                    if (u(k) > 0.0)
                        c(k) = alpha * rho_eff(k) * u(k) / r.d(k);
                if (!c.allFinite())
                    return r;
                VectorXd d_next;
                try
                {
                    d_next = d_update(g_hat, gamma, beta, rho_eff, c);
                }
                catch (const conditioning_error &)
                {
                    return r;
                }
                const double res = (d_next - r.d).cwiseAbs().maxCoeff();
                r.trace.push_back(res);
                r.d = d_next;
                if (!r.d.allFinite() || r.d.minCoeff() <= 0.0)
                    return r;
                if (res <= opt.eps)
                {
                    r.converged = true;
                    return r;
                }
            }
            return r;
        }

        struct TPassResult
        {
            VectorXd t;
            std::size_t iterations = 0;
            bool converged = false;
            std::vector<double> trace;
        };

        inline TPassResult target_t_pass(const MatrixXd &gamma, const MatrixXd &beta, const VectorXd &t0,
                                         const VectorXd &weight, const VectorXd &xi, double alpha,
                                         const PcOptions &opt)
        {
            TPassResult r;
            r.t = t0;
            for (r.iterations = 1; r.iterations <= opt.max_iter; ++r.iterations)
            {
                const VectorXd tr = gamma.transpose() * r.t;
                const VectorXd t_next = t_update(gamma, beta, weight, xi, alpha, tr);
                const double res = (t_next - r.t).cwiseAbs().maxCoeff();
                r.trace.push_back(res);
                r.t = t_next;
                if (!r.t.allFinite())
                    return r;
                if (res <= opt.eps)
                {
                    r.converged = true;
                    return r;
                }
            }
            return r;
        }

        inline void append(std::vector<double> &dst, const std::vector<double> &src)
        {
            dst.insert(dst.end(), src.begin(), src.end());
        }
    }

    /// Target-rate power control on the exact MMSE SINR. S_t is the target SINR.
    inline PcResult target_exact(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                 const VectorXd &nu, double S_t, double rho_u, const PoorDeviceRule &rule = {},
                                 const PcOptions &opt = {})
    {
        if (!(S_t > 0.0))
            throw domain_error("target_exact: S_t must be > 0");
        const Index K = beta.cols();
        ControlWeights uniform{VectorXd::Constant(K, 1.0 / std::sqrt(static_cast<double>(K))), nu};
        detail::check_pc_inputs(gamma, beta, uniform, opt);
        detail::require_shape(g_hat.rows() == beta.rows() && g_hat.cols() == K, "target_exact: g_hat must be M x K");
        const VectorXd rho_eff = detail::effective_rho(uniform, rho_u);
        const double alpha = S_t / (1.0 + S_t);

        PcResult out;
        if (!rule.explicit_poor)
        {
            const auto pass = detail::target_d_pass(g_hat, gamma, beta, rho_eff, VectorXd::Ones(K), alpha, opt);
            out.iterations = pass.iterations;
            out.trace = pass.trace;
            if (pass.converged)
            {
                VectorXd eta = alpha * pass.d.cwiseInverse();
                if (detail::in_unit_box(eta))
                {
                    out.converged = true;
                    out.eta = eta;
                    out.u = VectorXd::Ones(K);
                    out.poor.assign(static_cast<std::size_t>(K), false);
                    out.alpha_final = alpha;
                    out.achieved = detail::mmse_sinr_powers(g_hat, gamma, beta, rho_eff.cwiseProduct(eta));
                    return out;
                }
            }
        }

        std::vector<bool> poor;
        if (rule.explicit_poor)
        {
            poor = *rule.explicit_poor;
            detail::require_shape(static_cast<Index>(poor.size()) == K, "target_exact: poor mask must have K entries");
        }
        else
        {
            const VectorXd full = detail::mmse_sinr_powers(g_hat, gamma, beta, rho_eff);
            poor.resize(static_cast<std::size_t>(K));
            for (Index k = 0; k < K; ++k)
                poor[k] = full(k) < S_t;
        }
        out.passes = 2;
        out.poor = poor;
        if (std::count(poor.begin(), poor.end(), true) >= K)
        {
            out.feasible = false;
            for (Index k = 0; k < K; ++k)
                out.violating.push_back(k);
            return out;
        }
        ControlWeights w = weights_for_poor(poor, rule.u_p);
        w.nu = nu;
        out.u = w.u;
        const double u_g = w.u.maxCoeff();
        const double alpha2 = alpha / u_g;
        const auto pass = detail::target_d_pass(g_hat, gamma, beta, rho_eff, w.u, alpha2, opt);
        out.iterations += pass.iterations;
        detail::append(out.trace, pass.trace);
        out.alpha_final = alpha2;
        VectorXd eta = VectorXd::Zero(K);
        if (pass.converged)
            for (Index k = 0; k < K; ++k)
                eta(k) = alpha2 * w.u(k) / pass.d(k);
        if (!pass.converged || !detail::in_unit_box(eta, &out.violating))
        {
            out.feasible = false;
            if (out.violating.empty())
                for (Index k = 0; k < K; ++k)
                    if (!poor[k])
                        out.violating.push_back(k);
            return out;
        }
        out.converged = true;
        out.eta = eta;
        out.achieved = detail::mmse_sinr_powers(g_hat, gamma, beta, rho_eff.cwiseProduct(eta));
        return out;
    }

    /// Target-rate power control on RM Approximation 1.
    inline PcResult target_rm(const MatrixXd &gamma, const MatrixXd &beta, const VectorXd &nu, double S_t,
                              double rho_u, const PoorDeviceRule &rule = {}, const PcOptions &opt = {})
    {
        if (!(S_t > 0.0))
            throw domain_error("target_rm: S_t must be > 0");
        const Index M = beta.rows(), K = beta.cols();
        const double Md = static_cast<double>(M);
        ControlWeights uniform{VectorXd::Constant(K, 1.0 / std::sqrt(static_cast<double>(K))), nu};
        detail::check_pc_inputs(gamma, beta, uniform, opt);
        const VectorXd rho_eff = detail::effective_rho(uniform, rho_u);
        const RmResult full = detail::rm_ap1_powers(gamma, beta, rho_eff, opt.rm);
        const double alpha = S_t * Md / rho_u;

        PcResult out;
        if (!rule.explicit_poor)
        {
            const auto pass = detail::target_t_pass(gamma, beta, full.state.t_diag, VectorXd::Constant(K, rho_u),
                                                    VectorXd::Constant(K, S_t), alpha, opt);
            out.iterations = pass.iterations;
            out.trace = pass.trace;
            if (pass.converged)
            {
                VectorXd eta = alpha * nu.cwiseProduct(gamma.transpose() * pass.t).cwiseInverse();
                if (detail::in_unit_box(eta))
                {
                    out.converged = true;
                    out.eta = eta;
                    out.u = VectorXd::Ones(K);
                    out.poor.assign(static_cast<std::size_t>(K), false);
                    out.alpha_final = alpha;
                    out.achieved = detail::rm_ap1_powers(gamma, beta, rho_eff.cwiseProduct(eta), opt.rm).sinr;
                    return out;
                }
            }
        }

        std::vector<bool> poor;
        if (rule.explicit_poor)
        {
            poor = *rule.explicit_poor;
            detail::require_shape(static_cast<Index>(poor.size()) == K, "target_rm: poor mask must have K entries");
        }
        else
        {
            poor.resize(static_cast<std::size_t>(K));
            for (Index k = 0; k < K; ++k)
                poor[k] = full.sinr(k) < S_t;
        }
        out.passes = 2;
        out.poor = poor;
        if (std::count(poor.begin(), poor.end(), true) >= K)
        {
            out.feasible = false;
            for (Index k = 0; k < K; ++k)
                out.violating.push_back(k);
            return out;
        }
        ControlWeights w = weights_for_poor(poor, rule.u_p);
        out.u = w.u;
        const double u_g = w.u.maxCoeff();
        const double alpha2 = alpha / u_g;
        const VectorXd xi = (S_t / u_g) * w.u;
        const auto pass = detail::target_t_pass(gamma, beta, full.state.t_diag, rho_u * w.u, xi, alpha2, opt);
        out.iterations += pass.iterations;
        detail::append(out.trace, pass.trace);
        out.alpha_final = alpha2;
        VectorXd eta = VectorXd::Zero(K);
        if (pass.converged)
        {
            const VectorXd ntr = nu.cwiseProduct(gamma.transpose() * pass.t);
            for (Index k = 0; k < K; ++k)
                eta(k) = alpha2 * w.u(k) / ntr(k);
        }
        if (!pass.converged || !detail::in_unit_box(eta, &out.violating))
        {
            out.feasible = false;
            if (out.violating.empty())
                for (Index k = 0; k < K; ++k)
                    if (!poor[k])
                        out.violating.push_back(k);
            return out;
        }
        out.converged = true;
        out.eta = eta;
        out.achieved = detail::rm_ap1_powers(gamma, beta, rho_eff.cwiseProduct(eta), opt.rm).sinr;
        return out;
    }

    /// Runs a uniform-weight max-min pass, degrades the K_p devices with the largest
    /// power coefficients to weight u_p, and reruns.
    inline PcResult maxmin_with_dropping(PcEngine engine, const MatrixXcd &g_hat, const MatrixXd &gamma,
                                         const MatrixXd &beta, double rho_u, Index K_p, double u_p,
                                         const PcOptions &opt = {})
    {
        const Index K = beta.cols();
        auto run = [&](const ControlWeights &w)
        { return engine == PcEngine::exact ? maxmin_exact(g_hat, gamma, beta, w, rho_u, opt)
                                           : maxmin_rm(gamma, beta, w, rho_u, opt); };
        PcResult first = run(uniform_weights(K));
        if (K_p == 0)
            return first;
        const auto poor = largest_power_devices(first.eta, K_p);
        PcResult second = run(weights_for_poor(poor, u_p));
        second.poor = poor;
        second.passes = 2;
        second.iterations += first.iterations;
        return second;
    }

    /// Sum rate per unit of radiated UL power, sum R_k / (P_u sum eta_k).
    inline double ul_energy_efficiency(const VectorXd &rates, const VectorXd &eta, double P_u_mw)
    {
        detail::require_shape(rates.size() == eta.size(), "ul_energy_efficiency: size mismatch");
        if ((rates.array() < 0.0).any())
            throw domain_error("ul_energy_efficiency: rates must be >= 0");
        const double power = P_u_mw * eta.sum();
        if (!(power > 0.0))
            throw domain_error("ul_energy_efficiency: undefined for zero total power");
        return rates.sum() / power;
    }

    // ---- standard interference function probes ----

    /// f_k(d) = rho'_k g_k^H (alpha sum_j rho'_j u_j / d_j J_j + I)^{-1} g_k at fixed alpha.
    inline VectorXd interference_f(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                   const ControlWeights &w, double rho_u, double alpha, const VectorXd &d)
    {
        const VectorXd rho_eff = detail::effective_rho(w, rho_u);
        const VectorXd c = alpha * rho_eff.cwiseProduct(w.u).cwiseQuotient(d);
        return detail::d_update(g_hat, gamma, beta, rho_eff, c);
    }

    /// q_m(l) = [(alpha/M) sum_k rho u_k / tr(Gamma_k diag(l)) (B_k - xi_k/(1+xi_k) Gamma_k) + I/M]^{-1}_mm.
    inline VectorXd interference_q(const MatrixXd &gamma, const MatrixXd &beta, const ControlWeights &w,
                                   double rho_u, double alpha, const VectorXd &l)
    {
        const double Md = static_cast<double>(beta.rows());
        const VectorXd xi = (rho_u * alpha / Md) * w.u;
        return detail::t_update(gamma, beta, rho_u * w.u, xi, alpha, gamma.transpose() * l);
    }

    struct ProbeReport
    {
        bool positivity = true;
        bool monotonicity = true;
        bool scalability = true;
        std::size_t checks = 0;
        std::string witness; // first violation, empty when all hold

        bool ok() const { return positivity && monotonicity && scalability; }
    };

    namespace detail
    {
        template <class Fn>
        ProbeReport probe_standard(Fn &&fn, const VectorXd &scale, std::size_t trials, std::uint64_t seed)
        {
            constexpr double tol = 1e-12;
            ProbeReport rep;
            Rng rng(derive_seed(seed, stream::probe));
            const Index n = scale.size();
            auto describe = [](const char *what, std::size_t trial, Index comp, double a, double b)
            {
                return std::string(what) + " violated at trial " + std::to_string(trial) + ", component " +
                       std::to_string(comp) + ": " + std::to_string(a) + " vs " + std::to_string(b);
            };
            for (std::size_t t = 0; t < trials; ++t)
            {
                VectorXd x(n), lower(n);
                for (Index i = 0; i < n; ++i)
                {
                    x(i) = scale(i) * std::exp(rng.uniform(-3.0, 3.0));
                    lower(i) = x(i) * rng.uniform(0.05, 0.95);
                }
                const double zeta = 1.0 + rng.uniform(0.01, 2.0);
                const VectorXd fx = fn(x), flo = fn(lower), fz = fn(VectorXd(zeta * x));
                for (Index i = 0; i < fx.size(); ++i)
                {
                    ++rep.checks;
                    if (!(fx(i) > 0.0) && rep.positivity)
                    {
                        rep.positivity = false;
                        if (rep.witness.empty())
                            rep.witness = describe("positivity", t, i, fx(i), 0.0);
                    }
                    if (!(fx(i) - flo(i) > tol * std::abs(fx(i))) && rep.monotonicity)
                    {
                        rep.monotonicity = false;
                        if (rep.witness.empty())
                            rep.witness = describe("monotonicity", t, i, fx(i), flo(i));
                    }
                    if (!(zeta * fx(i) - fz(i) > tol * std::abs(fz(i))) && rep.scalability)
                    {
                        rep.scalability = false;
                        if (rep.witness.empty())
                            rep.witness = describe("scalability", t, i, zeta * fx(i), fz(i));
                    }
                }
            }
            return rep;
        }
    }

    /// Random-point check of positivity, monotonicity and scalability of the exact
    /// engine's map f(d) at a fixed alpha.
    inline ProbeReport probe_exact_interference(const MatrixXcd &g_hat, const MatrixXd &gamma, const MatrixXd &beta,
                                                const ControlWeights &w, double rho_u, std::size_t trials,
                                                std::uint64_t seed)
    {
        const VectorXd rho_eff = detail::effective_rho(w, rho_u);
        const VectorXd d0 = detail::d_update(g_hat, gamma, beta, rho_eff, rho_eff);
        const double alpha = detail::weighted_min(d0, w.u);
        return detail::probe_standard([&](const VectorXd &d)
                                      { return interference_f(g_hat, gamma, beta, w, rho_u, alpha, d); },
                                      d0, trials, seed);
    }

    /// Same check for the RM engine's map q(l).
    inline ProbeReport probe_rm_interference(const MatrixXd &gamma, const MatrixXd &beta, const ControlWeights &w,
                                             double rho_u, std::size_t trials, std::uint64_t seed)
    {
        const VectorXd t0 = detail::rm_ap1_powers(gamma, beta, detail::effective_rho(w, rho_u), {}).state.t_diag;
        const double alpha = detail::weighted_min(w.nu.cwiseProduct(gamma.transpose() * t0), w.u);
        return detail::probe_standard([&](const VectorXd &l)
                                      { return interference_q(gamma, beta, w, rho_u, alpha, l); },
                                      t0, trials, seed);
    }
}

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
#include "dl_sinr.hpp"
#include "socp.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cfmimo
{
    /// Which point of the optimal set is reported. min_power picks the least total power that
    /// still reaches t_star; max_slack keeps the deepest point of the cone system at t_star.
    enum class DlCanonical
    {
        min_power,
        max_slack
    };

    struct DlOptions
    {
        DlCanonical canonical = DlCanonical::min_power;
        double rel_tol = 1e-3;
        double feas_tol = 1e-6;
        std::size_t max_steps = 200;
        SocpOptions socp{};
    };

    struct BisectionStep
    {
        double t = 0.0;
        bool feasible = false;
        std::size_t newton_steps = 0;
        std::string note;
    };

    struct BisectionResult
    {
        DlPowerMatrix power;
        double t_star = 0.0;   // highest level certified feasible
        double t_upper = 0.0;  // lowest level found infeasible (or the a-priori bound)
        double min_sinr = 0.0; // min_k SINR_orth at the returned eta
        VectorXd p_opt;
        std::size_t bisection_steps = 0;
        double feasibility_tol = 0.0;
        std::vector<BisectionStep> trace;
    };

    namespace detail
    {
        inline SocpProblem cone_data(const MatrixXd &gamma, const MatrixXd &beta, double rho_d)
        {
            require_shape(gamma.rows() == beta.rows() && gamma.cols() == beta.cols(),
                          "DL power: gamma and beta shapes differ");
            if ((gamma.array() <= 0.0).any() || (beta.array() <= 0.0).any())
                throw domain_error("DL power: gamma and beta must be positive");
            SocpProblem pb;
            pb.c = (rho_d * gamma).cwiseSqrt();
            pb.b2 = rho_d * beta;
            return pb;
        }

        // eta_mk = x_mk^2 / gamma_mk with negative x dropped (it only lowers the coherent gain).
        inline MatrixXd eta_from_x(const MatrixXd &x, const MatrixXd &gamma)
        {
            return x.cwiseMax(0.0).cwiseAbs2().cwiseQuotient(gamma);
        }
    }

    /// One feasibility test of the cone system at level t.
    inline SocpResult socp_feasible(double t, const MatrixXd &gamma, const MatrixXd &beta, double rho_d,
                                    double feas_tol = 1e-6, SocpOptions opt = {})
    {
        SocpProblem pb = detail::cone_data(gamma, beta, rho_d);
        pb.t = t;
        opt.feas_tol = feas_tol;
        return socp_solve(pb, SocpMode::verdict, opt);
    }

    /// A-priori bound max_k rho (sum_m sqrt(gamma_mk))^2 on the max-min SINR.
    inline double dl_t_max(const MatrixXd &gamma, double rho_d)
    {
        return rho_d * gamma.cwiseSqrt().colwise().sum().cwiseAbs2().maxCoeff();
    }

    /// Max-min DL power control by bisection over cone feasibility.
    inline BisectionResult maxmin_bisection(const MatrixXd &gamma, const MatrixXd &beta, double rho_d,
                                            const DlOptions &opt = {})
    {
        SocpProblem pb = detail::cone_data(gamma, beta, rho_d);
        SocpOptions sopt = opt.socp;
        sopt.feas_tol = opt.feas_tol;

        BisectionResult out;
        out.feasibility_tol = opt.feas_tol;
        double lo = 0.0, hi = dl_t_max(gamma, rho_d);
        while (lo == 0.0 || (hi - lo) / hi > opt.rel_tol)
        {
            if (out.bisection_steps >= opt.max_steps)
                throw solver_error("maxmin_bisection: step budget exhausted");
            ++out.bisection_steps;
            pb.t = 0.5 * (lo + hi);
            const SocpResult r = socp_solve(pb, SocpMode::verdict, sopt);
            out.trace.push_back({pb.t, r.feasible, r.newton_steps, r.note});
            (r.feasible ? lo : hi) = pb.t;
        }

        pb.t = lo;
        SocpResult best = socp_solve(pb, SocpMode::polish, sopt);
        if (!best.feasible)
            throw solver_error("maxmin_bisection: polish solve lost feasibility at t=" + std::to_string(lo));
        if (opt.canonical == DlCanonical::min_power && best.s > 0.0)
            best = socp_min_power(pb, best, 0.0, sopt);
        out.power = make_dl_power(detail::eta_from_x(best.x, gamma), gamma);
        out.p_opt = out.power.p;
        out.t_star = lo;
        out.t_upper = hi;
        out.min_sinr = dl_sinr_orth(out.power.eta, gamma, beta, rho_d).minCoeff();
        return out;
    }

    struct FixedPResult
    {
        DlPowerMatrix power;
        double min_sinr = 0.0;
        std::size_t bisection_steps = 0;
        std::vector<BisectionStep> trace;
    };

    /// Max-min with the per-AP powers fixed to p (sum_k eta_mk gamma_mk = p_m).
    inline FixedPResult maxmin_fixed_p(const VectorXd &p, const MatrixXd &gamma, const MatrixXd &beta, double rho_d,
                                       const DlOptions &opt = {})
    {
        SocpProblem pb = detail::cone_data(gamma, beta, rho_d);
        const Index M = gamma.rows(), K = gamma.cols();
        detail::require_shape(p.size() == M, "maxmin_fixed_p: p must have M entries");
        if ((p.array() < 0.0).any() || (p.array() > 1.0).any())
            throw domain_error("maxmin_fixed_p: p must lie in [0,1]");

        FixedPResult out;
        if (p.maxCoeff() == 0.0)
        {
            out.power = make_dl_power(MatrixXd::Zero(M, K), gamma);
            return out;
        }
        pb.theta_fixed = p.cwiseSqrt();
        SocpOptions sopt = opt.socp;
        sopt.feas_tol = opt.feas_tol;

        // SINR_k <= (sum_m c_mk sqrt(p_m))^2 / (1 + sum_m b2_mk p_m)
        const VectorXd den = (pb.b2.transpose() * p).array() + 1.0;
        const VectorXd num = (pb.c.transpose() * pb.theta_fixed).cwiseAbs2();
        double lo = 0.0, hi = num.cwiseQuotient(den).minCoeff();

        MatrixXd x = MatrixXd::Zero(M, K);
        if (hi > 0.0)
        {
            while (lo == 0.0 || (hi - lo) / hi > opt.rel_tol)
            {
                if (out.bisection_steps >= opt.max_steps)
                    throw solver_error("maxmin_fixed_p: step budget exhausted");
                ++out.bisection_steps;
                pb.t = 0.5 * (lo + hi);
                const SocpResult r = socp_solve(pb, SocpMode::verdict, sopt);
                out.trace.push_back({pb.t, r.feasible, r.newton_steps, r.note});
                if (r.feasible)
                {
                    lo = pb.t;
                    x = r.x;
                }
                else
                    hi = pb.t;
            }
        }

        // Fill each budget exactly; scaling a non-negative row up only raises the numerators.
        x = x.cwiseMax(0.0);
        for (Index m = 0; m < M; ++m)
        {
            if (p(m) == 0.0)
            {
                x.row(m).setZero();
                continue;
            }
            if (x.row(m).norm() == 0.0)
                x.row(m) = pb.c.row(m);
            x.row(m) *= std::sqrt(p(m)) / x.row(m).norm();
        }
        out.power = make_dl_power(detail::eta_from_x(x, gamma), gamma);
        out.min_sinr = dl_sinr_orth(out.power.eta, gamma, beta, rho_d).minCoeff();
        return out;
    }

    /// eta_mk = p_m / sum_k gamma_mk for every k.
    inline DlPowerMatrix uniform_power(const VectorXd &p, const MatrixXd &gamma)
    {
        detail::require_shape(p.size() == gamma.rows(), "uniform_power: p must have M entries");
        if ((p.array() < 0.0).any() || (p.array() > 1.0).any())
            throw domain_error("uniform_power: p must lie in [0,1]");
        const VectorXd row_sum = gamma.rowwise().sum();
        MatrixXd eta(gamma.rows(), gamma.cols());
        for (Index m = 0; m < gamma.rows(); ++m)
            eta.row(m).setConstant(p(m) / row_sum(m));
        DlPowerMatrix out{std::move(eta), p};
        return out;
    }

    /// Uniform power for a single AP from its own gamma row only.
    inline VectorXd uniform_power_row(double p_m, const VectorXd &gamma_row)
    {
        return VectorXd::Constant(gamma_row.size(), p_m / gamma_row.sum());
    }

    /// Sum DL rate over radiated power, sum_k log2(1+SINR_k) / (P_d sum_m p_m).
    inline double dl_energy_efficiency(const VectorXd &sinr, const VectorXd &p, double P_d_mw)
    {
        const double power = P_d_mw * p.sum();
        if (!(power > 0.0))
            throw domain_error("dl_energy_efficiency: undefined for zero total power");
        return (1.0 + sinr.array()).log2().sum() / power;
    }
}

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
#include "estimator.hpp"

#include <cmath>
#include <vector>

namespace cfmimo
{
    /// DL power coefficients eta (M x K) and the resulting per-AP normalized powers.
    struct DlPowerMatrix
    {
        MatrixXd eta;
        VectorXd p;
    };

    /// p_m = sum_k eta_mk gamma_mk.
    inline VectorXd per_ap_power(const MatrixXd &eta, const MatrixXd &gamma)
    {
        detail::require_shape(eta.rows() == gamma.rows() && eta.cols() == gamma.cols(),
                              "per_ap_power: eta and gamma shapes differ");
        return eta.cwiseProduct(gamma).rowwise().sum();
    }

    /// Indices of APs with p_m > 1 + tol.
    inline std::vector<Index> budget_violations(const VectorXd &p, double tol = 1e-9)
    {
        std::vector<Index> out;
        for (Index m = 0; m < p.size(); ++m)
            if (p(m) > 1.0 + tol)
                out.push_back(m);
        return out;
    }

    inline DlPowerMatrix make_dl_power(MatrixXd eta, const MatrixXd &gamma)
    {
        if ((eta.array() < 0.0).any())
            throw domain_error("DL power coefficients must be >= 0");
        DlPowerMatrix out{std::move(eta), VectorXd()};
        out.p = per_ap_power(out.eta, gamma);
        return out;
    }

    namespace detail
    {
        inline void check_dl_shapes(const MatrixXd &eta, const MatrixXd &gamma, const MatrixXd &beta)
        {
            require_shape(eta.rows() == beta.rows() && eta.cols() == beta.cols() && gamma.rows() == beta.rows() &&
                              gamma.cols() == beta.cols(),
                          "DL SINR: eta, gamma and beta must all be M x K");
        }
    }

    /// Orthonormal-pilot DL SINR:
    /// rho (sum_m sqrt(eta_mk) gamma_mk)^2 / (1 + rho sum_m beta_mk p_m).
    inline VectorXd dl_sinr_orth(const MatrixXd &eta, const MatrixXd &gamma, const MatrixXd &beta, double rho_d)
    {
        detail::check_dl_shapes(eta, gamma, beta);
        const VectorXd p = per_ap_power(eta, gamma);
        const VectorXd num = (eta.cwiseSqrt().cwiseProduct(gamma)).colwise().sum().transpose();
        const VectorXd den = (rho_d * (beta.transpose() * p)).array() + 1.0;
        return (rho_d * num.cwiseAbs2()).cwiseQuotient(den);
    }

    /// Random-pilot DL SINR with LMMSE estimation and conjugate beamforming. `a[m]` holds
    /// the projection vectors a_mk of AP m as columns (tau x K).
    inline VectorXd dl_sinr_iot(const MatrixXd &eta, const MatrixXd &gamma, const MatrixXd &beta,
                                const std::vector<MatrixXcd> &a, const MatrixXcd &psi, double rho_d, double rho_p)
    {
        detail::check_dl_shapes(eta, gamma, beta);
        const Index M = beta.rows(), K = beta.cols();
        detail::require_shape(static_cast<Index>(a.size()) == M, "dl_sinr_iot: need one projection matrix per AP");
        detail::require_shape(psi.cols() == K, "dl_sinr_iot: psi must have K columns");
        const double tau_rho = static_cast<double>(psi.rows()) * rho_p;
        const MatrixXd sq = eta.cwiseSqrt();

        // Per AP: P = Psi^H A_m (P(j,k') = psi_j^H a_mk'), ||a_mk'||^2 and
        // S(k') = sum_j beta_mj |psi_j^H a_mk'|^2.
        MatrixXd a_norm(M, K), s_term(M, K);
        std::vector<MatrixXcd> P(static_cast<std::size_t>(M));
        for (Index m = 0; m < M; ++m)
        {
            detail::require_shape(a[m].rows() == psi.rows() && a[m].cols() == K,
                                  "dl_sinr_iot: projection matrix must be tau x K");
            P[m] = psi.adjoint() * a[m];
            a_norm.row(m) = a[m].colwise().squaredNorm();
            s_term.row(m) = (beta.row(m) * P[m].cwiseAbs2());
        }

        // w(m,k') = eta_mk' (||a_mk'||^2 + tau rho_p S_m(k')) enters as sum_m beta_mk w(m,k').
        const MatrixXd w = eta.cwiseProduct(a_norm + tau_rho * s_term);
        const MatrixXd spread = beta.transpose() * w; // (k, k')

        VectorXd sinr(K);
        for (Index k = 0; k < K; ++k)
        {
            double num = 0.0, den = 1.0;
            for (Index m = 0; m < M; ++m)
            {
                num += sq(m, k) * gamma(m, k);
                den += rho_d * eta(m, k) * gamma(m, k) * beta(m, k);
            }
            for (Index kp = 0; kp < K; ++kp)
            {
                if (kp == k)
                    continue;
                Complex coherent = 0.0;
                for (Index m = 0; m < M; ++m)
                    coherent += sq(m, kp) * beta(m, k) * P[m](k, kp);
                den += rho_d * (spread(k, kp) + tau_rho * std::norm(coherent));
            }
            sinr(k) = rho_d * num * num / den;
        }
        return sinr;
    }

    inline VectorXd dl_sinr_iot(const MatrixXd &eta, const EstimationResult &est, const MatrixXd &beta,
                                const MatrixXcd &psi, double rho_d, double rho_p)
    {
        return dl_sinr_iot(eta, est.gamma, beta, est.a, psi, rho_d, rho_p);
    }
}

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
#include "random.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace cfmimo
{
    /// Per-AP LMMSE estimation data. `a[m]` is tau x K with column k = a_mk.
    /// gamma, a and err_var depend only on the pilots and beta; g_hat is filled per
    /// coherence block by apply_estimates().
    struct EstimationResult
    {
        MatrixXcd g_hat;            // M x K
        MatrixXd gamma;             // M x K
        std::vector<MatrixXcd> a;   // M entries, tau x K
        MatrixXd err_var;           // M x K, beta - gamma

        Index M() const { return gamma.rows(); }
        Index K() const { return gamma.cols(); }
    };

    struct ApEstimate
    {
        VectorXcd g_hat; // K
        MatrixXcd a;     // tau x K
        VectorXd gamma;  // K
    };

    namespace detail
    {
        // a_m = sqrt(tau rho_p) Z_m^{-1} Psi B_m, with Z_m = tau rho_p Psi B_m Psi^H + I
        // solved through its Cholesky factor.
        inline MatrixXcd lmmse_projection(const MatrixXcd &psi, const VectorXd &beta_m, double rho_p)
        {
            const Index tau = psi.rows();
            const double scale = static_cast<double>(tau) * rho_p;
            MatrixXcd Z = MatrixXcd::Identity(tau, tau);
            Z.noalias() += scale * psi * beta_m.cast<Complex>().asDiagonal() * psi.adjoint();
            Eigen::LLT<MatrixXcd> llt(Z);
            if (llt.info() != Eigen::Success)
                throw conditioning_error("lmmse_projection: Z_m is not positive definite");
            MatrixXcd a = llt.solve(psi);
            a *= std::sqrt(scale);
            return a * beta_m.cast<Complex>().asDiagonal();
        }

        inline VectorXd gamma_from_projection(const MatrixXcd &psi, const MatrixXcd &a, const VectorXd &beta_m,
                                              double rho_p)
        {
            const double root = std::sqrt(static_cast<double>(psi.rows()) * rho_p);
            VectorXd gamma(psi.cols());
            for (Index k = 0; k < psi.cols(); ++k)
            {
                const Complex v = root * beta_m(k) * psi.col(k).dot(a.col(k));
                // psi_k^H Z^{-1} psi_k is real for Hermitian Z
                if (std::abs(v.imag()) > 1e-10 * std::max(1.0, std::abs(v.real())))
                    throw conditioning_error("gamma_variance: non-real estimate variance");
                gamma(k) = v.real();
            }
            return gamma;
        }

        inline void check_estimator_inputs(const MatrixXcd &psi, Index K, double rho_p)
        {
            require_shape(psi.cols() == K, "estimator: beta and psi disagree on K");
            if (rho_p < 0.0)
                throw domain_error("estimator: rho_p must be >= 0");
        }
    }

    /// LMMSE estimate at one AP from its tau-sample pilot observation.
    inline ApEstimate lmmse_estimate(const VectorXcd &y_m, const MatrixXcd &psi, const VectorXd &beta_m,
                                     double rho_p)
    {
        detail::check_estimator_inputs(psi, beta_m.size(), rho_p);
        detail::require_shape(y_m.size() == psi.rows(), "lmmse_estimate: y_m must have tau entries");
        ApEstimate out;
        out.a = detail::lmmse_projection(psi, beta_m, rho_p);
        out.g_hat = out.a.adjoint() * y_m;
        out.gamma = detail::gamma_from_projection(psi, out.a, beta_m, rho_p);
        return out;
    }

    /// gamma_mk = E|g_hat_mk|^2 for one AP.
    inline VectorXd gamma_variance(const MatrixXcd &psi, const VectorXd &beta_m, double rho_p)
    {
        detail::check_estimator_inputs(psi, beta_m.size(), rho_p);
        return detail::gamma_from_projection(psi, detail::lmmse_projection(psi, beta_m, rho_p), beta_m, rho_p);
    }

    /// Projection vectors, variances and error variances for every AP.
    inline EstimationResult lmmse_projections(const MatrixXcd &psi, const MatrixXd &beta, double rho_p)
    {
        detail::check_estimator_inputs(psi, beta.cols(), rho_p);
        const Index M = beta.rows(), K = beta.cols();
        EstimationResult out;
        out.gamma.resize(M, K);
        out.a.resize(static_cast<std::size_t>(M));
        for (Index m = 0; m < M; ++m)
        {
            const VectorXd beta_m = beta.row(m).transpose();
            out.a[m] = detail::lmmse_projection(psi, beta_m, rho_p);
            out.gamma.row(m) = detail::gamma_from_projection(psi, out.a[m], beta_m, rho_p).transpose();
        }
        out.err_var = beta - out.gamma;
        return out;
    }

    /// Single-pilot projection estimator used as the comparison baseline:
    /// g_hat_mk = sqrt(tau rho_p) beta_mk / (tau rho_p sum_j beta_mj |psi_j^H psi_k|^2 + 1) psi_k^H y_m.
    inline EstimationResult projection_baseline(const MatrixXcd &psi, const MatrixXd &beta, double rho_p)
    {
        detail::check_estimator_inputs(psi, beta.cols(), rho_p);
        const Index M = beta.rows(), K = beta.cols();
        const double scale = static_cast<double>(psi.rows()) * rho_p;
        const MatrixXd overlap = (psi.adjoint() * psi).cwiseAbs2(); // |psi_j^H psi_k|^2

        EstimationResult out;
        out.gamma.resize(M, K);
        out.a.resize(static_cast<std::size_t>(M));
        for (Index m = 0; m < M; ++m)
        {
            out.a[m].resize(psi.rows(), K);
            for (Index k = 0; k < K; ++k)
            {
                double denom = 1.0;
                for (Index j = 0; j < K; ++j)
                    denom += scale * beta(m, j) * overlap(j, k);
                const double c = std::sqrt(scale) * beta(m, k) / denom;
                out.a[m].col(k) = c * psi.col(k);
                out.gamma(m, k) = scale * beta(m, k) * beta(m, k) / denom;
            }
        }
        out.err_var = beta - out.gamma;
        return out;
    }

    /// g_hat (M x K) from the received pilots using precomputed projections.
    inline MatrixXcd estimate_channels(const EstimationResult &proj, const MatrixXcd &y)
    {
        detail::require_shape(y.cols() == proj.M(), "estimate_channels: y must be tau x M");
        MatrixXcd g_hat(proj.M(), proj.K());
        for (Index m = 0; m < proj.M(); ++m)
            g_hat.row(m) = (proj.a[m].adjoint() * y.col(m)).transpose();
        return g_hat;
    }

    inline void apply_estimates(EstimationResult &proj, const MatrixXcd &y)
    {
        proj.g_hat = estimate_channels(proj, y);
    }

    struct CovarianceProbePoint
    {
        std::size_t tau = 0;
        double mean_abs_cov = 0.0; // mean over pilot sets and pairs k < l, normalized
    };

    /// Empirical cross-covariance of LMMSE estimates at a single AP as a function of the
    /// pilot length. For each tau, `n_pilot_sets` independent pilot sets are drawn; for each
    /// set, Cov[g_hat_k, g_hat_l] is estimated from `n_trials` fresh channel and noise draws
    /// and normalized by sqrt(gamma_k gamma_l).
    inline std::vector<CovarianceProbePoint> estimate_covariance_probe(const VectorXd &beta_row, double rho_p,
                                                                       std::span<const std::size_t> tau_list,
                                                                       std::size_t n_trials,
                                                                       std::size_t n_pilot_sets,
                                                                       PilotKind kind, std::uint64_t seed)
    {
        if (n_trials < 100)
            throw domain_error("estimate_covariance_probe: need at least 100 trials for statistical power");
        if (n_pilot_sets < 1)
            throw domain_error("estimate_covariance_probe: need at least one pilot set");
        const Index K = beta_row.size();
        std::vector<CovarianceProbePoint> out;
        if (K < 2)
            return out;

        const VectorXd sqrt_beta = beta_row.cwiseSqrt();
        for (std::size_t ti = 0; ti < tau_list.size(); ++ti)
        {
            const Index tau = static_cast<Index>(tau_list[ti]);
            const double root = std::sqrt(static_cast<double>(tau) * rho_p);
            double acc = 0.0;
            std::size_t pairs = 0;
            for (std::size_t set = 0; set < n_pilot_sets; ++set)
            {
                Rng rng(derive_seed(seed, stream::probe, ti * 1000003ULL + set));
                const PilotSet pilots = make_pilots(kind, K, tau, rng);
                const MatrixXcd a = detail::lmmse_projection(pilots.psi, beta_row, rho_p);
                const VectorXd gamma = detail::gamma_from_projection(pilots.psi, a, beta_row, rho_p);

                MatrixXcd samples(static_cast<Index>(n_trials), K);
                VectorXcd g(K);
                for (std::size_t t = 0; t < n_trials; ++t)
                {
                    for (Index k = 0; k < K; ++k)
                        g(k) = sqrt_beta(k) * rng.complex_gaussian();
                    VectorXcd y(tau);
                    for (Index i = 0; i < tau; ++i)
                        y(i) = rng.complex_gaussian();
                    y.noalias() += root * pilots.psi * g;
                    samples.row(static_cast<Index>(t)) = (a.adjoint() * y).transpose();
                }
                const VectorXcd mean = samples.colwise().mean().transpose();
                samples.rowwise() -= mean.transpose();
                const MatrixXcd cov = samples.adjoint() * samples / static_cast<double>(n_trials - 1);
                for (Index k = 0; k < K; ++k)
                    for (Index l = k + 1; l < K; ++l)
                    {
                        acc += std::abs(cov(k, l)) / std::sqrt(gamma(k) * gamma(l));
                        ++pairs;
                    }
            }
            out.push_back({tau_list[ti], acc / static_cast<double>(pairs)});
        }
        return out;
    }
}

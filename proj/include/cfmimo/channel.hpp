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

#include <cmath>
#include <string>

namespace cfmimo
{
    /// tau x K pilot matrix; column k is the unit-norm pilot of device k.
    struct PilotSet
    {
        MatrixXcd psi;

        Index tau() const { return psi.rows(); }
        Index K() const { return psi.cols(); }
    };

    enum class PilotKind
    {
        random,
        orthonormal
    };

    /// Random pilots, uniform on the complex unit sphere.
    inline PilotSet generate_pilots(Index K, Index tau, Rng &rng)
    {
        if (K < 1 || tau < 1)
            throw config_error("generate_pilots: K and tau must be >= 1");
        PilotSet out{rng.complex_gaussian(tau, K)};
        for (Index k = 0; k < K; ++k)
            out.psi.col(k).normalize();
        return out;
    }

    /// Random orthonormal pilots (tau >= K) from the thin QR factor of a Gaussian matrix.
    inline PilotSet orthonormal_pilots(Index K, Index tau, Rng &rng)
    {
        if (K < 1 || tau < K)
            throw config_error("orthonormal_pilots: need 1 <= K <= tau");
        const MatrixXcd raw = rng.complex_gaussian(tau, K);
        Eigen::HouseholderQR<MatrixXcd> qr(raw);
        PilotSet out{qr.householderQ() * MatrixXcd::Identity(tau, K)};
        return out;
    }

    inline PilotSet make_pilots(PilotKind kind, Index K, Index tau, Rng &rng)
    {
        return kind == PilotKind::random ? generate_pilots(K, tau, rng) : orthonormal_pilots(K, tau, rng);
    }

    struct ChannelDraw
    {
        MatrixXcd h; // M x K small-scale, CN(0,1)
        MatrixXcd g; // M x K composite, sqrt(beta) .* h
    };

    /// Composite channel from given small-scale fading (test and replay hook).
    inline ChannelDraw compose_channel(const MatrixXd &beta, MatrixXcd h)
    {
        detail::require_shape(beta.rows() == h.rows() && beta.cols() == h.cols(),
                              "compose_channel: beta and h shapes differ");
        if ((beta.array() <= 0.0).any())
            throw domain_error("compose_channel: beta must be positive");
        ChannelDraw out{std::move(h), MatrixXcd()};
        out.g = out.h.cwiseProduct(beta.cwiseSqrt().cast<Complex>());
        return out;
    }

    inline ChannelDraw draw_channel(const MatrixXd &beta, Rng &rng)
    {
        return compose_channel(beta, rng.complex_gaussian(beta.rows(), beta.cols()));
    }

    /// tau x M received pilot matrix, column m observed at AP m.
    struct ReceivedPilots
    {
        MatrixXcd y;
    };

    /// Y = sqrt(tau rho_p) Psi G^T + W with the noise matrix supplied by the caller.
    inline ReceivedPilots receive_pilots(const MatrixXcd &psi, const MatrixXcd &g, double rho_p,
                                         const MatrixXcd &noise)
    {
        detail::require_shape(psi.cols() == g.cols(), "receive_pilots: psi has " + std::to_string(psi.cols()) +
                                                           " columns but g has " + std::to_string(g.cols()));
        detail::require_shape(noise.rows() == psi.rows() && noise.cols() == g.rows(),
                              "receive_pilots: noise must be tau x M");
        if (rho_p < 0.0)
            throw domain_error("receive_pilots: rho_p must be >= 0");
        const double tau = static_cast<double>(psi.rows());
        ReceivedPilots out{noise};
        if (rho_p > 0.0)
            out.y.noalias() += std::sqrt(tau * rho_p) * psi * g.transpose();
        return out;
    }

    inline ReceivedPilots receive_pilots(const MatrixXcd &psi, const MatrixXcd &g, double rho_p, Rng &rng)
    {
        detail::require_shape(psi.cols() == g.cols(), "receive_pilots: psi and g disagree on K");
        return receive_pilots(psi, g, rho_p, rng.complex_gaussian(psi.rows(), g.rows()));
    }
}

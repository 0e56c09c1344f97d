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

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfmimo
{
    using Complex = std::complex<double>;
    using Eigen::MatrixXcd;
    using Eigen::MatrixXd;
    using Eigen::VectorXcd;
    using Eigen::VectorXd;

    using Index = Eigen::Index;

    /// Invalid configuration or argument combination.
    struct config_error : std::invalid_argument
    {
        using std::invalid_argument::invalid_argument;
    };

    /// Argument outside the mathematical domain of an operation.
    struct domain_error : std::domain_error
    {
        using std::domain_error::domain_error;
    };

    /// Shapes of matrices/vectors do not agree.
    struct dimension_error : std::invalid_argument
    {
        using std::invalid_argument::invalid_argument;
    };

    /// Random field generation failed (e.g. covariance not PSD after jitter).
    struct generation_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    /// Numerically meaningless result (e.g. q_k >= 1 in the MMSE SINR map).
    struct conditioning_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    /// Fixed-point iteration did not reach its tolerance.
    struct convergence_error : std::runtime_error
    {
        convergence_error(const std::string &what, std::size_t iterations_, double residual_)
            : std::runtime_error(what + " (iterations=" + std::to_string(iterations_) +
                                 ", residual=" + std::to_string(residual_) + ")"),
              iterations(iterations_), residual(residual_)
        {
        }
        std::size_t iterations;
        double residual;
    };

    /// Cone feasibility solver gave no verdict within its budget.
    struct solver_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    /// Neural network training failure.
    struct training_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    namespace detail
    {
        inline void require(bool condition, const char *message)
        {
            if (!condition)
                throw config_error(message);
        }

        inline void require_shape(bool condition, const std::string &message)
        {
            if (!condition)
                throw dimension_error(message);
        }
    }
}

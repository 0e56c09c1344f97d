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

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

// Phase-I barrier method for the DL max-min cone system at a fixed SINR level t.
//
// Variables per AP m: x_mk = sqrt(gamma_mk) sqrt(eta_mk) (k = 1..K) and theta_m, plus one
// slack s shared by all devices. With c_mk = sqrt(rho_d gamma_mk), b2_mk = rho_d beta_mk:
//
//   AP cones      ||x_m|| <= theta_m <= 1
//   device cones  (1/sqrt(t)) sum_m c_mk x_mk - s >= ||(1, sqrt(b2_k) .* theta)||
//
// The system is feasible iff max s >= 0. Optionally theta is fixed (theta_m^2 = p_m).
// A second stage can hold s fixed and minimize sum_m theta_m^2 over the same cones.

namespace cfmimo
{
    struct SocpOptions
    {
        double feas_tol = 1e-6;
        double tau0 = 1.0;
        double mu = 10.0;
        std::size_t max_newton = 4000;
        std::size_t max_center_steps = 200;
        double center_tol = 1e-10; // on lambda^2 / 2
        double gap_tol = 1e-10;    // stop when nu / tau is below this (polish mode)
        double power_gap_tol = 1e-5; // same, for the power-minimization stage
    };

    enum class SocpMode
    {
        verdict, // stop as soon as a feasibility verdict is available
        polish   // maximize the slack to high accuracy
    };

    struct SocpResult
    {
        bool feasible = false;
        MatrixXd x;      // M x K
        VectorXd theta;  // M
        double s = 0.0;  // achieved slack
        double s_upper = std::numeric_limits<double>::infinity(); // certified bound on max s
        std::size_t newton_steps = 0;
        std::string note;
    };

    /// Problem data. When `theta_fixed` is non-empty, theta_m = theta_fixed(m) and APs with
    /// theta_fixed(m) == 0 carry no variables.
    struct SocpProblem
    {
        MatrixXd c;  // sqrt(rho gamma), M x K
        MatrixXd b2; // rho beta, M x K
        double t = 1.0;
        VectorXd theta_fixed;

        Index M() const { return c.rows(); }
        Index K() const { return c.cols(); }
        bool free_theta() const { return theta_fixed.size() == 0; }
    };

    namespace detail
    {
        class SocpBarrier
        {
        public:
            explicit SocpBarrier(const SocpProblem &pb) : pb_(pb)
            {
                M_ = pb.M();
                K_ = pb.K();
                free_ = pb.free_theta();
                nb_ = K_ + (free_ ? 1 : 0);
                for (Index m = 0; m < M_; ++m)
                    if (free_ || pb.theta_fixed(m) > 0.0)
                        aps_.push_back(m);
                n_ = static_cast<Index>(aps_.size()) * nb_ + 1;
                inv_sqrt_t_ = 1.0 / std::sqrt(pb.t);
                const_b_ = VectorXd::Zero(K_);
                if (!free_)
                    for (Index k = 0; k < K_; ++k)
                        for (Index m = 0; m < M_; ++m)
                            const_b_(k) += pb.b2(m, k) * pb.theta_fixed(m) * pb.theta_fixed(m);
            }

            // Switch to the power-minimization stage with the slack frozen at s_fix.
            void set_min_power(double s_fix)
            {
                minp_ = true;
                s_fix_ = s_fix;
            }

            Index size() const { return n_; }
            Index s_index() const { return n_ - 1; }
            Index block(std::size_t i) const { return static_cast<Index>(i) * nb_; }

            // barrier parameter
            double nu() const
            {
                const double na = static_cast<double>(aps_.size());
                return (free_ ? 3.0 : 2.0) * na + 2.0 * static_cast<double>(K_);
            }

            VectorXd start_point() const
            {
                VectorXd z = VectorXd::Zero(n_);
                for (std::size_t i = 0; i < aps_.size(); ++i)
                {
                    const double th = free_ ? 0.5 : pb_.theta_fixed(aps_[i]);
                    const double xv = 0.5 * th / std::sqrt(static_cast<double>(K_));
                    z.segment(block(i), K_).setConstant(xv);
                    if (free_)
                        z(block(i) + K_) = th;
                }
                double s0 = std::numeric_limits<double>::infinity();
                for (Index k = 0; k < K_; ++k)
                    s0 = std::min(s0, lin(z, k) - std::sqrt(1.0 + bterm(z, k)));
                z(s_index()) = s0 - 1.0;
                return z;
            }

            // (1/sqrt t) sum_m c_mk x_mk
            double lin(const VectorXd &z, Index k) const
            {
                double a = 0.0;
                for (std::size_t i = 0; i < aps_.size(); ++i)
                    a += pb_.c(aps_[i], k) * z(block(i) + k);
                return a * inv_sqrt_t_;
            }

            // sum_m b2_mk theta_m^2
            double bterm(const VectorXd &z, Index k) const
            {
                if (!free_)
                    return const_b_(k);
                double v = 0.0;
                for (std::size_t i = 0; i < aps_.size(); ++i)
                {
                    const double th = z(block(i) + K_);
                    v += pb_.b2(aps_[i], k) * th * th;
                }
                return v;
            }

            double theta(const VectorXd &z, std::size_t i) const
            {
                return free_ ? z(block(i) + K_) : pb_.theta_fixed(aps_[i]);
            }

            double ap_slack(const VectorXd &z, std::size_t i) const
            {
                const double th = theta(z, i);
                return th * th - z.segment(block(i), K_).squaredNorm();
            }

            bool in_domain(const VectorXd &z) const
            {
                for (std::size_t i = 0; i < aps_.size(); ++i)
                {
                    if (free_)
                    {
                        const double th = z(block(i) + K_);
                        if (!(th > 0.0 && th < 1.0))
                            return false;
                    }
                    if (!(ap_slack(z, i) > 0.0))
                        return false;
                }
                const double s = slack(z);
                for (Index k = 0; k < K_; ++k)
                {
                    const double u = lin(z, k) - s;
                    if (!(u > 0.0) || !(u * u - 1.0 - bterm(z, k) > 0.0))
                        return false;
                }
                return true;
            }

            double slack(const VectorXd &z) const { return minp_ ? s_fix_ : z(s_index()); }

            double value(const VectorXd &z, double tau) const
            {
                double phi = minp_ ? 0.0 : -tau * z(s_index());
                for (std::size_t i = 0; i < aps_.size(); ++i)
                {
                    phi -= std::log(ap_slack(z, i));
                    if (free_)
                    {
                        phi -= std::log(1.0 - z(block(i) + K_));
                        if (minp_)
                            phi += tau * z(block(i) + K_) * z(block(i) + K_);
                    }
                }
                const double s = slack(z);
                for (Index k = 0; k < K_; ++k)
                {
                    const double u = lin(z, k) - s;
                    phi -= std::log(u * u - 1.0 - bterm(z, k));
                }
                return phi;
            }

            // Gradient and structured Hessian H = H0 + U diag(sigma) U^T,
            // H0 block diagonal (one block per AP plus the slack entry).
            struct Model
            {
                VectorXd grad;
                std::vector<MatrixXd> blocks;
                double h_s = 0.0;
                MatrixXd U;
                VectorXd sigma;
            };

            Model model(const VectorXd &z, double tau) const
            {
                Model md;
                md.grad = VectorXd::Zero(n_);
                md.grad(s_index()) = minp_ ? 0.0 : -tau;
                md.blocks.assign(aps_.size(), MatrixXd::Zero(nb_, nb_));
                md.U = MatrixXd::Zero(n_, 2 * K_ + 1);
                md.sigma = VectorXd::Zero(2 * K_ + 1);

                for (std::size_t i = 0; i < aps_.size(); ++i)
                {
                    const Index o = block(i);
                    const double f = ap_slack(z, i);
                    VectorXd df(nb_);
                    df.head(K_) = -2.0 * z.segment(o, K_);
                    if (free_)
                        df(K_) = 2.0 * z(o + K_);
                    md.grad.segment(o, nb_) -= df / f;
                    MatrixXd &B = md.blocks[i];
                    B.diagonal().head(K_).setConstant(2.0 / f);
                    if (free_)
                    {
                        B(K_, K_) = -2.0 / f;
                        const double gap = 1.0 - z(o + K_);
                        md.grad(o + K_) += 1.0 / gap;
                        B(K_, K_) += 1.0 / (gap * gap);
                        if (minp_)
                        {
                            md.grad(o + K_) += 2.0 * tau * z(o + K_);
                            B(K_, K_) += 2.0 * tau;
                        }
                    }
                    B.noalias() += df * df.transpose() / (f * f);
                }

                const double s = slack(z);
                double s_curv = 0.0;
                for (Index k = 0; k < K_; ++k)
                {
                    const double u = lin(z, k) - s;
                    const double w = u * u - 1.0 - bterm(z, k);
                    auto p = md.U.col(k);
                    auto q = md.U.col(K_ + k);
                    for (std::size_t i = 0; i < aps_.size(); ++i)
                    {
                        const Index o = block(i);
                        const double pc = pb_.c(aps_[i], k) * inv_sqrt_t_;
                        p(o + k) = pc;
                        q(o + k) = 2.0 * u * pc;
                        if (free_)
                        {
                            const double th = z(o + K_);
                            const double b2 = pb_.b2(aps_[i], k);
                            q(o + K_) = -2.0 * b2 * th;
                            md.blocks[i](K_, K_) += 2.0 * b2 / w;
                        }
                    }
                    p(s_index()) = minp_ ? 0.0 : -1.0;
                    q(s_index()) = minp_ ? 0.0 : -2.0 * u;
                    md.grad -= q / w;
                    md.sigma(k) = -2.0 / w;
                    md.sigma(K_ + k) = 1.0 / (w * w);
                    s_curv += 4.0 * u * u / (w * w) - 2.0 / w;
                }
                // The slack has no curvature in H0; borrow it from the low-rank part.
                if (minp_)
                {
                    // frozen slack: decoupled unit entry, zero gradient
                    md.h_s = 1.0;
                    md.sigma(2 * K_) = -1.0;
                    return md;
                }
                md.h_s = std::max(s_curv, 1e-12);
                md.U(s_index(), 2 * K_) = 1.0;
                md.sigma(2 * K_) = -md.h_s;
                return md;
            }

            VectorXd apply(const Model &md, const VectorXd &v) const
            {
                VectorXd out(n_);
                for (std::size_t i = 0; i < aps_.size(); ++i)
                    out.segment(block(i), nb_) = md.blocks[i] * v.segment(block(i), nb_);
                out(s_index()) = md.h_s * v(s_index());
                out.noalias() += md.U * md.sigma.cwiseProduct(md.U.transpose() * v);
                return out;
            }

            MatrixXd dense_hessian(const Model &md) const
            {
                MatrixXd H = MatrixXd::Zero(n_, n_);
                for (std::size_t i = 0; i < aps_.size(); ++i)
                    H.block(block(i), block(i), nb_, nb_) = md.blocks[i];
                H(s_index(), s_index()) = md.h_s;
                H.noalias() += md.U * md.sigma.asDiagonal() * md.U.transpose();
                return H;
            }

            // Solves H d = r via the block-diagonal factor and a small capacitance system,
            // with iterative refinement against the exact operator.
            VectorXd solve(const Model &md, const VectorXd &r) const
            {
                std::vector<Eigen::LLT<MatrixXd>> fac;
                fac.reserve(aps_.size());
                for (const auto &B : md.blocks)
                {
                    fac.emplace_back(B);
                    if (fac.back().info() != Eigen::Success)
                        return dense_solve(md, r);
                }
                auto h0_solve = [&](const auto &rhs)
                {
                    MatrixXd out(rhs.rows(), rhs.cols());
                    for (std::size_t i = 0; i < aps_.size(); ++i)
                        out.middleRows(block(i), nb_) = fac[i].solve(rhs.middleRows(block(i), nb_));
                    out.row(s_index()) = rhs.row(s_index()) / md.h_s;
                    return out;
                };
                const MatrixXd HU = h0_solve(md.U);
                MatrixXd C = md.U.transpose() * HU;
                C.diagonal() += md.sigma.cwiseInverse();
                const Eigen::PartialPivLU<MatrixXd> lu(C);

                auto once = [&](const VectorXd &rhs)
                {
                    const VectorXd v0 = h0_solve(rhs);
                    const VectorXd y = lu.solve(md.U.transpose() * v0);
                    return VectorXd(v0 - HU * y);
                };
                VectorXd d = once(r);
                for (int it = 0; it < 3; ++it)
                {
                    const VectorXd res = r - apply(md, d);
                    if (res.norm() <= 1e-12 * r.norm())
                        return d;
                    d += once(res);
                }
                const VectorXd res = r - apply(md, d);
                if (!(res.norm() <= 1e-6 * r.norm()))
                    return dense_solve(md, r);
                return d;
            }

            VectorXd dense_solve(const Model &md, const VectorXd &r) const
            {
                const MatrixXd H = dense_hessian(md);
                Eigen::LDLT<MatrixXd> ldlt(H);
                if (ldlt.info() != Eigen::Success)
                    throw solver_error("socp: singular Newton system");
                return ldlt.solve(r);
            }

            VectorXd pack(const SocpResult &r) const
            {
                VectorXd z = VectorXd::Zero(n_);
                for (std::size_t i = 0; i < aps_.size(); ++i)
                {
                    z.segment(block(i), K_) = r.x.row(aps_[i]).transpose();
                    if (free_)
                        z(block(i) + K_) = r.theta(aps_[i]);
                }
                z(s_index()) = r.s;
                return z;
            }

            void extract(const VectorXd &z, SocpResult &out) const
            {
                out.x = MatrixXd::Zero(M_, K_);
                out.theta = free_ ? VectorXd::Zero(M_) : pb_.theta_fixed;
                for (std::size_t i = 0; i < aps_.size(); ++i)
                {
                    out.x.row(aps_[i]) = z.segment(block(i), K_).transpose();
                    if (free_)
                        out.theta(aps_[i]) = z(block(i) + K_);
                }
                out.s = slack(z);
            }

        private:
            const SocpProblem &pb_;
            Index M_ = 0, K_ = 0, nb_ = 0, n_ = 0;
            bool free_ = true;
            bool minp_ = false;
            double s_fix_ = 0.0;
            double inv_sqrt_t_ = 1.0;
            VectorXd const_b_;
            std::vector<Index> aps_;
        };
    }

    /// Runs the phase-I barrier method. In verdict mode it returns as soon as the slack is
    /// >= -feas_tol (feasible) or the duality bound s + nu/tau is < -feas_tol (infeasible).
    inline SocpResult socp_solve(const SocpProblem &pb, SocpMode mode, const SocpOptions &opt = {})
    {
        detail::require_shape(pb.b2.rows() == pb.c.rows() && pb.b2.cols() == pb.c.cols(),
                              "socp: c and b2 shapes differ");
        if (!(pb.t > 0.0))
            throw domain_error("socp: t must be > 0");
        detail::SocpBarrier bar(pb);
        SocpResult out;
        VectorXd z = bar.start_point();
        const Index is = bar.s_index();
        const double nu = bar.nu();
        double tau = opt.tau0;

        auto feasible_now = [&]() { return mode == SocpMode::verdict && z(is) >= -opt.feas_tol; };
        if (feasible_now())
        {
            out.feasible = true;
            bar.extract(z, out);
            out.note = "feasible at start point";
            return out;
        }

        for (;;)
        {
            // centering
            for (std::size_t step = 0;; ++step)
            {
                if (out.newton_steps >= opt.max_newton)
                    throw solver_error("socp: Newton budget exhausted at t=" + std::to_string(pb.t) +
                                       " (slack " + std::to_string(z(is)) + ", tau " + std::to_string(tau) + ")");
                const auto md = bar.model(z, tau);
                const VectorXd dz = bar.solve(md, -md.grad);
                const double lambda2 = -md.grad.dot(dz);
                if (lambda2 / 2.0 <= opt.center_tol || step >= opt.max_center_steps)
                    break;
                ++out.newton_steps;
                const double phi0 = bar.value(z, tau);
                const double slope = md.grad.dot(dz);
                double alpha = 1.0;
                VectorXd zn;
                for (int ls = 0; ls < 60; ++ls, alpha *= 0.5)
                {
                    zn = z + alpha * dz;
                    if (bar.in_domain(zn) && bar.value(zn, tau) <= phi0 + 0.25 * alpha * slope)
                        break;
                }
                if (!bar.in_domain(zn))
                    break;
                z = zn;
                if (feasible_now())
                {
                    out.feasible = true;
                    bar.extract(z, out);
                    return out;
                }
            }

            const double bound = z(is) + nu / tau;
            out.s_upper = std::min(out.s_upper, bound);
            if (mode == SocpMode::verdict && bound < -opt.feas_tol)
            {
                out.feasible = false;
                bar.extract(z, out);
                out.note = "certified infeasible";
                return out;
            }
            if (nu / tau <= opt.gap_tol * std::max(1.0, std::abs(z(is))))
            {
                bar.extract(z, out);
                out.feasible = z(is) >= -opt.feas_tol;
                out.note = "gap closed";
                return out;
            }
            tau *= opt.mu;
        }
    }

    /// Among the points of the cone system with slack frozen at s_fix, minimizes sum_m theta_m^2.
    /// `start` must be strictly inside (its slack above s_fix), e.g. a polish result.
    inline SocpResult socp_min_power(const SocpProblem &pb, const SocpResult &start, double s_fix,
                                     const SocpOptions &opt = {})
    {
        if (!pb.free_theta())
            throw domain_error("socp_min_power: theta must be free");
        if (!(start.s > s_fix))
            throw domain_error("socp_min_power: start point is not strictly inside");
        detail::SocpBarrier bar(pb);
        bar.set_min_power(s_fix);
        VectorXd z = bar.pack(start);
        if (!bar.in_domain(z))
            throw domain_error("socp_min_power: start point outside the barrier domain");
        SocpResult out;
        out.note = "min power";
        const double nu = bar.nu();
        bool stalled = false;
        for (double tau = opt.tau0; !stalled; tau *= opt.mu)
        {
            for (std::size_t step = 0; step < opt.max_center_steps; ++step)
            {
                if (out.newton_steps >= opt.max_newton)
                    throw solver_error("socp_min_power: Newton budget exhausted at t=" + std::to_string(pb.t));
                const auto md = bar.model(z, tau);
                VectorXd dz;
                try
                {
                    dz = bar.solve(md, -md.grad);
                }
                catch (const solver_error &)
                {
                    // APs driven to zero power make the system degenerate; z is still feasible
                    stalled = true;
                    out.note = "min power (stopped on a degenerate Newton system)";
                    break;
                }
                const double lambda2 = -md.grad.dot(dz);
                if (lambda2 / 2.0 <= opt.center_tol)
                    break;
                ++out.newton_steps;
                const double phi0 = bar.value(z, tau);
                const double slope = md.grad.dot(dz);
                double alpha = 1.0;
                VectorXd zn;
                for (int ls = 0; ls < 60; ++ls, alpha *= 0.5)
                {
                    zn = z + alpha * dz;
                    if (bar.in_domain(zn) && bar.value(zn, tau) <= phi0 + 0.25 * alpha * slope)
                        break;
                }
                if (!bar.in_domain(zn))
                    break;
                z = zn;
            }
            if (nu / tau <= opt.power_gap_tol)
                break;
        }
        bar.extract(z, out);
        out.feasible = s_fix >= -opt.feas_tol;
        return out;
    }

    /// Max violation of the original cone system at (x, theta) for level t (<= 0 is feasible).
    inline double socp_residual(const SocpProblem &pb, const MatrixXd &x, const VectorXd &theta)
    {
        double worst = -std::numeric_limits<double>::infinity();
        for (Index m = 0; m < pb.M(); ++m)
        {
            worst = std::max(worst, x.row(m).norm() - theta(m));
            worst = std::max(worst, theta(m) - 1.0);
        }
        for (Index k = 0; k < pb.K(); ++k)
        {
            const double lhs = pb.c.col(k).dot(x.col(k)) / std::sqrt(pb.t);
            const double rhs = std::sqrt(1.0 + pb.b2.col(k).dot(theta.cwiseAbs2()));
            worst = std::max(worst, rhs - lhs);
        }
        return worst;
    }
}

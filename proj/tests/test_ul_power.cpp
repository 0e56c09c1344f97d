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


#include "catch_amalgamated.hpp"

#include <cfmimo/channel.hpp>
#include <cfmimo/estimator.hpp>
#include <cfmimo/netgen.hpp>
#include <cfmimo/ul_power.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace cfmimo;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{
    struct PcInstance
    {
        NetworkConfig cfg;
        MatrixXd beta;
        MatrixXd gamma;
        MatrixXcd g_hat;
        double rho_u = 0.0;
    };

    PcInstance make_instance(std::size_t M, std::size_t K, std::size_t tau, std::uint64_t seed,
                             double side = 1000.0)
    {
        PcInstance in;
        in.cfg.M = M;
        in.cfg.K = K;
        in.cfg.tau = tau;
        in.cfg.area_side_m = side;
        const auto net = generate_network(in.cfg, seed);
        Rng rng(derive_seed(seed, stream::pilots));
        const PilotSet p = generate_pilots(static_cast<Index>(K), static_cast<Index>(tau), rng);
        EstimationResult est = lmmse_projections(p.psi, net.beta, in.cfg.rho_p());
        const ChannelDraw ch = draw_channel(net.beta, rng);
        apply_estimates(est, receive_pilots(p.psi, ch.g, in.cfg.rho_p(), rng).y);
        in.beta = net.beta;
        in.gamma = est.gamma;
        in.g_hat = est.g_hat;
        in.rho_u = in.cfg.rho_u();
        return in;
    }

    double rel_spread(const VectorXd &v)
    {
        return (v.maxCoeff() - v.minCoeff()) / v.maxCoeff();
    }

    VectorXd mmse_q(const PcInstance &in, const VectorXd &eta)
    {
        const VectorXd s = exact_sinr_mmse(in.g_hat, in.gamma, in.beta, eta, in.rho_u);
        return s.cwiseQuotient((1.0 + s.array()).matrix());
    }
}

TEST_CASE("weight construction", "[ul-power]")
{
    const ControlWeights w0 = build_weights(5, 0, 1e-8);
    CHECK((w0.u.array() - 1.0 / std::sqrt(5.0)).abs().maxCoeff() < 1e-15);
    CHECK(w0.nu == VectorXd::Ones(5));

    const ControlWeights w1 = build_weights(2, 1, 0.0);
    CHECK(w1.u(0) == 0.0);
    CHECK(w1.u(1) == 1.0);

    const ControlWeights w2 = build_weights(40, 4, 1e-8);
    CHECK_THAT(w2.u(4), WithinAbs(std::sqrt(1.0 / 36.0), 1e-12));
    CHECK_THAT(w2.u(0), WithinAbs(1e-8, 1e-20));
    CHECK_THAT(w2.u.norm(), WithinAbs(1.0, 1e-12));

    CHECK_THROWS_AS(build_weights(4, 4, 1e-8), domain_error);
    CHECK_THROWS_AS(build_weights(4, 5, 1e-8), domain_error);
    CHECK_THROWS_AS(build_weights(4, 1, 1.5), domain_error);

    const ControlWeights u = uniform_weights(3);
    CHECK_NOTHROW(u.validate());
    ControlWeights bad = u;
    bad.nu(0) = 0.0;
    CHECK_THROWS_AS(bad.validate(), domain_error);
}

TEST_CASE("largest power devices", "[ul-power]")
{
    const VectorXd eta = (VectorXd(5) << 0.3, 1.0, 0.7, 1.0, 0.1).finished();
    const auto one = largest_power_devices(eta, 1);
    CHECK(one == std::vector<bool>{false, true, false, false, false});
    const auto three = largest_power_devices(eta, 3);
    CHECK(three == std::vector<bool>{false, true, true, true, false});
}

TEST_CASE("a single device gets full power", "[ul-power]")
{
    const PcInstance in = make_instance(10, 1, 1, 1);
    const PcResult a = maxmin_exact(in.g_hat, in.gamma, in.beta, uniform_weights(1), in.rho_u);
    CHECK(a.eta.size() == 1);
    CHECK_THAT(a.eta(0), WithinAbs(1.0, 1e-12));
    CHECK(a.iterations == 1);
    const PcResult b = maxmin_rm(in.gamma, in.beta, uniform_weights(1), in.rho_u);
    CHECK_THAT(b.eta(0), WithinAbs(1.0, 1e-12));
}

TEST_CASE("exact max-min equalizes weighted MMSE quality", "[ul-power]")
{
    for (std::uint64_t seed = 10; seed < 15; ++seed)
    {
        const PcInstance in = make_instance(40, 8, 8, seed);
        const PcResult r = maxmin_exact(in.g_hat, in.gamma, in.beta, uniform_weights(8), in.rho_u);
        REQUIRE(r.converged);
        CHECK(r.iterations <= 500);
        CHECK_THAT(r.eta.maxCoeff(), WithinAbs(1.0, 1e-6));
        CHECK(r.eta.minCoeff() > 0.0);
        const VectorXd q = mmse_q(in, r.eta);
        CHECK(rel_spread(q) <= 1e-4);
        const VectorXd s = exact_sinr_mmse(in.g_hat, in.gamma, in.beta, r.eta, in.rho_u);
        CHECK((s - r.achieved).norm() <= 1e-9 * s.norm());
    }
}

TEST_CASE("exact max-min follows non-uniform rate weights", "[ul-power]")
{
    const PcInstance in = make_instance(40, 6, 6, 20);
    ControlWeights w = uniform_weights(6);
    w.u << 1.0, 2.0, 1.0, 3.0, 1.0, 1.0;
    w.u.normalize();
    const PcResult r = maxmin_exact(in.g_hat, in.gamma, in.beta, w, in.rho_u);
    const VectorXd ratio = mmse_q(in, r.eta).cwiseQuotient(w.u);
    CHECK(rel_spread(ratio) <= 1e-4);
}

TEST_CASE("RM max-min equalizes the deterministic-equivalent SINR", "[ul-power]")
{
    for (std::uint64_t seed = 30; seed < 35; ++seed)
    {
        const PcInstance in = make_instance(40, 8, 8, seed);
        const PcResult r = maxmin_rm(in.gamma, in.beta, uniform_weights(8), in.rho_u);
        REQUIRE(r.converged);
        CHECK_THAT(r.eta.maxCoeff(), WithinAbs(1.0, 1e-6));
        const VectorXd s = rm_ap1(in.gamma, in.beta, r.eta, in.rho_u).sinr;
        CHECK(rel_spread(s) <= 1e-4);
    }
}

TEST_CASE("max-min solutions are locally optimal", "[ul-power]")
{
    const PcInstance in = make_instance(40, 8, 8, 40);
    const PcResult ex = maxmin_exact(in.g_hat, in.gamma, in.beta, uniform_weights(8), in.rho_u);
    const PcResult rm = maxmin_rm(in.gamma, in.beta, uniform_weights(8), in.rho_u);
    const double best_ex = mmse_q(in, ex.eta).minCoeff();
    const double best_rm = rm_ap1(in.gamma, in.beta, rm.eta, in.rho_u).sinr.minCoeff();
    Rng rng(41);
    for (int t = 0; t < 20; ++t)
    {
        VectorXd dx(8);
        for (Index k = 0; k < 8; ++k)
            dx(k) = rng.uniform(-0.05, 0.05);
        const VectorXd e1 = (ex.eta + dx).cwiseMax(0.0).cwiseMin(1.0);
        const VectorXd e2 = (rm.eta + dx).cwiseMax(0.0).cwiseMin(1.0);
        CHECK(mmse_q(in, e1).minCoeff() <= best_ex * (1.0 + 1e-9));
        CHECK(rm_ap1(in.gamma, in.beta, e2, in.rho_u).sinr.minCoeff() <= best_rm * (1.0 + 1e-9));
    }
}

TEST_CASE("symmetric devices receive equal power", "[ul-power]")
{
    PcInstance in = make_instance(20, 3, 3, 50);
    in.beta.col(1) = in.beta.col(0);
    in.gamma.col(1) = in.gamma.col(0);
    in.g_hat.col(1) = in.g_hat.col(0);
    const PcResult ex = maxmin_exact(in.g_hat, in.gamma, in.beta, uniform_weights(3), in.rho_u);
    CHECK_THAT(ex.eta(0), WithinAbs(ex.eta(1), 1e-6));
    const PcResult rm = maxmin_rm(in.gamma, in.beta, uniform_weights(3), in.rho_u);
    CHECK_THAT(rm.eta(0), WithinAbs(rm.eta(1), 1e-6));
}

TEST_CASE("device dropping by weight", "[ul-power]")
{
    const PcInstance in = make_instance(40, 8, 8, 60);
    for (PcEngine engine : {PcEngine::exact, PcEngine::rm})
    {
        const PcResult r = maxmin_with_dropping(engine, in.g_hat, in.gamma, in.beta, in.rho_u, 1, 1e-8);
        CHECK(r.passes == 2);
        REQUIRE(std::count(r.poor.begin(), r.poor.end(), true) == 1);
        for (Index k = 0; k < 8; ++k)
            if (r.poor[k])
                CHECK(r.eta(k) <= 1e-6);
        CHECK_THAT(r.eta.maxCoeff(), WithinAbs(1.0, 1e-6));
        const PcResult none = maxmin_with_dropping(engine, in.g_hat, in.gamma, in.beta, in.rho_u, 0, 1e-8);
        CHECK(none.passes == 1);
    }
}

TEST_CASE("max-min reports non-convergence", "[ul-power]")
{
    const PcInstance in = make_instance(40, 8, 8, 70);
    PcOptions opt;
    opt.max_iter = 1;
    opt.eps = 1e-300;
    CHECK_THROWS_AS(maxmin_exact(in.g_hat, in.gamma, in.beta, uniform_weights(8), in.rho_u, opt), convergence_error);
    CHECK_THROWS_AS(maxmin_rm(in.gamma, in.beta, uniform_weights(8), in.rho_u, opt), convergence_error);
}

TEST_CASE("exact target rate is met in one pass when every device can reach it", "[ul-power]")
{
    const PcInstance in = make_instance(40, 8, 8, 80);
    const VectorXd full = exact_sinr_mmse(in.g_hat, in.gamma, in.beta, VectorXd::Ones(8), in.rho_u);
    const double S_t = 0.5 * full.minCoeff();
    const PcResult r = target_exact(in.g_hat, in.gamma, in.beta, VectorXd::Ones(8), S_t, in.rho_u);
    REQUIRE(r.feasible);
    CHECK(r.passes == 1);
    CHECK(r.eta.maxCoeff() <= 1.0);
    const VectorXd s = exact_sinr_mmse(in.g_hat, in.gamma, in.beta, r.eta, in.rho_u);
    for (Index k = 0; k < 8; ++k)
        CHECK_THAT(s(k), WithinRel(S_t, 0.01));
}

TEST_CASE("target rate at the max-min level reproduces max-min", "[ul-power]")
{
    const PcInstance in = make_instance(40, 8, 8, 90);
    const PcResult mm = maxmin_exact(in.g_hat, in.gamma, in.beta, uniform_weights(8), in.rho_u);
    const double S_t = mm.achieved.minCoeff();
    const PcResult r = target_exact(in.g_hat, in.gamma, in.beta, VectorXd::Ones(8), S_t, in.rho_u);
    REQUIRE(r.feasible);
    CHECK((r.eta - mm.eta).cwiseAbs().maxCoeff() <= 1e-3);

    const PcResult mr = maxmin_rm(in.gamma, in.beta, uniform_weights(8), in.rho_u);
    const PcResult tr = target_rm(in.gamma, in.beta, VectorXd::Ones(8), mr.achieved.minCoeff(), in.rho_u);
    REQUIRE(tr.feasible);
    CHECK((tr.eta - mr.eta).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("target rate with a degraded device", "[ul-power]")
{
    const PcInstance in = make_instance(40, 8, 8, 100);
    const VectorXd full = exact_sinr_mmse(in.g_hat, in.gamma, in.beta, VectorXd::Ones(8), in.rho_u);
    Index weakest = 0;
    full.minCoeff(&weakest);
    std::vector<bool> poor(8, false);
    poor[weakest] = true;
    VectorXd others(7);
    for (Index k = 0, i = 0; k < 8; ++k)
        if (k != weakest)
            others(i++) = full(k);
    const double S_t = 0.5 * others.minCoeff();

    const PcResult r =
        target_exact(in.g_hat, in.gamma, in.beta, VectorXd::Ones(8), S_t, in.rho_u, PoorDeviceRule{1e-8, poor});
    REQUIRE(r.feasible);
    CHECK(r.passes == 2);
    CHECK(r.eta(weakest) <= 1e-6);
    const VectorXd s = exact_sinr_mmse(in.g_hat, in.gamma, in.beta, r.eta, in.rho_u);
    for (Index k = 0; k < 8; ++k)
        if (k != weakest)
            CHECK_THAT(s(k), WithinRel(S_t, 0.01));

    const VectorXd rm_full = rm_ap1(in.gamma, in.beta, VectorXd::Ones(8), in.rho_u).sinr;
    const PcResult t = target_rm(in.gamma, in.beta, VectorXd::Ones(8), 0.5 * rm_full.minCoeff(), in.rho_u,
                                 PoorDeviceRule{1e-8, poor});
    REQUIRE(t.feasible);
    CHECK(t.eta(weakest) <= 1e-6);
    const VectorXd st = rm_ap1(in.gamma, in.beta, t.eta, in.rho_u).sinr;
    for (Index k = 0; k < 8; ++k)
        if (k != weakest)
            CHECK_THAT(st(k), WithinRel(0.5 * rm_full.minCoeff(), 0.01));
}

TEST_CASE("RM target rate is met on feasible instances", "[ul-power]")
{
    for (std::uint64_t seed = 110; seed < 115; ++seed)
    {
        const PcInstance in = make_instance(40, 8, 8, seed);
        const double S_t = std::exp2(0.1) - 1.0;
        const PcResult r = target_rm(in.gamma, in.beta, VectorXd::Ones(8), S_t, in.rho_u);
        if (!r.feasible)
            continue;
        const VectorXd s = rm_ap1(in.gamma, in.beta, r.eta, in.rho_u).sinr;
        for (Index k = 0; k < 8; ++k)
            if (r.poor.empty() || !r.poor[k])
                CHECK_THAT(s(k), WithinRel(S_t, 0.01));
        CHECK((r.eta.array() >= 0.0).all());
        CHECK((r.eta.array() <= 1.0).all());
    }
}

TEST_CASE("RM target rate for one device solves the scalar equation", "[ul-power]")
{
    const PcInstance in = make_instance(16, 1, 1, 120);
    const double full = rm_ap1(in.gamma, in.beta, VectorXd::Ones(1), in.rho_u).sinr(0);
    const double S_t = 0.3 * full;
    const PcResult r = target_rm(in.gamma, in.beta, VectorXd::Ones(1), S_t, in.rho_u);
    REQUIRE(r.feasible);

    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 100; ++i)
    {
        const double mid = 0.5 * (lo + hi);
        const double s = rm_ap1(in.gamma, in.beta, VectorXd::Constant(1, mid), in.rho_u).sinr(0);
        (s < S_t ? lo : hi) = mid;
    }
    CHECK_THAT(r.eta(0), WithinRel(0.5 * (lo + hi), 1e-6));

    const PcResult bad = target_rm(in.gamma, in.beta, VectorXd::Ones(1), 2.0 * full, in.rho_u);
    CHECK_FALSE(bad.feasible);
    CHECK(bad.eta.size() == 0);
    CHECK(bad.violating == std::vector<Index>{0});

    const PcResult bad_exact =
        target_exact(in.g_hat, in.gamma, in.beta, VectorXd::Ones(1), 1e9, in.rho_u);
    CHECK_FALSE(bad_exact.feasible);
    CHECK(bad_exact.eta.size() == 0);

    CHECK_THROWS_AS(target_rm(in.gamma, in.beta, VectorXd::Ones(1), 0.0, in.rho_u), domain_error);
}

TEST_CASE("UL energy efficiency", "[ul-power]")
{
    const VectorXd r = VectorXd::Constant(4, 1.5);
    CHECK_THAT(ul_energy_efficiency(r, VectorXd::Ones(4), 20.0), WithinRel(1.5 / 20.0, 1e-15));
    CHECK_THAT(ul_energy_efficiency(r, VectorXd::Constant(4, 0.5), 20.0),
               WithinRel(2.0 * ul_energy_efficiency(r, VectorXd::Ones(4), 20.0), 1e-15));
    CHECK_THROWS_AS(ul_energy_efficiency(r, VectorXd::Zero(4), 20.0), domain_error);
    CHECK_THROWS_AS(ul_energy_efficiency(r, VectorXd::Ones(3), 20.0), dimension_error);
}

TEST_CASE("interference maps are standard", "[ul-power]")
{
    const PcInstance in = make_instance(16, 4, 4, 130);
    const ControlWeights w = uniform_weights(4);
    const ProbeReport ex = probe_exact_interference(in.g_hat, in.gamma, in.beta, w, in.rho_u, 100, 1);
    CHECK(ex.ok());
    CHECK(ex.witness.empty());
    CHECK(ex.checks == 400);
    const ProbeReport rm = probe_rm_interference(in.gamma, in.beta, w, in.rho_u, 100, 2);
    CHECK(rm.ok());
    CHECK(rm.checks == 1600);
}

TEST_CASE("interference map boundary and monotonicity instances", "[ul-power]")
{
    const PcInstance in = make_instance(16, 4, 4, 140);
    const ControlWeights w = uniform_weights(4);
    VectorXd d(4);
    d << 1.0, 2.0, 0.5, 3.0;
    d *= 1e-2;
    const double alpha = 0.1;
    const VectorXd f = interference_f(in.g_hat, in.gamma, in.beta, w, in.rho_u, alpha, d);
    CHECK(interference_f(in.g_hat, in.gamma, in.beta, w, in.rho_u, alpha, VectorXd(1.0 * d)) == f);
    const VectorXd half = interference_f(in.g_hat, in.gamma, in.beta, w, in.rho_u, alpha, VectorXd(0.5 * d));
    CHECK((f.array() > half.array()).all());
    const VectorXd scaled = interference_f(in.g_hat, in.gamma, in.beta, w, in.rho_u, alpha, VectorXd(2.0 * d));
    CHECK((2.0 * f.array() > scaled.array()).all());

    VectorXd l = VectorXd::Constant(16, 5.0);
    const VectorXd q = interference_q(in.gamma, in.beta, w, in.rho_u, alpha, l);
    CHECK((q.array() > 0.0).all());
    const VectorXd qh = interference_q(in.gamma, in.beta, w, in.rho_u, alpha, VectorXd(0.5 * l));
    CHECK((q.array() > qh.array()).all());
}

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
#include "dl_power.hpp"
#include "estimator.hpp"
#include "netgen.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace cfmimo
{
    /// K_hat -> 4 -> 4 -> 4 -> 1, tanh hidden layers, rectified output.
    struct MlpModel
    {
        static constexpr int hidden_layers = 3;
        static constexpr int width = 4;
        static constexpr int format_version = 1;

        int khat = 4;
        std::array<MatrixXd, 4> W; // W[l] is out x in
        std::array<VectorXd, 4> b;
        VectorXd in_mean; // per-feature shift (dB)
        VectorXd in_std;  // per-feature scale (dB)

        std::vector<int> layer_sizes() const { return {khat, width, width, width, 1}; }

        Index parameter_count() const
        {
            Index n = 0;
            for (int l = 0; l < 4; ++l)
                n += W[l].size() + b[l].size();
            return n;
        }

        /// Zero weights, identity normalization.
        static MlpModel zeros(int khat)
        {
            if (khat < 1)
                throw domain_error("MlpModel: khat must be >= 1");
            MlpModel m;
            m.khat = khat;
            const auto sizes = m.layer_sizes();
            for (int l = 0; l < 4; ++l)
            {
                m.W[l] = MatrixXd::Zero(sizes[l + 1], sizes[l]);
                m.b[l] = VectorXd::Zero(sizes[l + 1]);
            }
            m.in_mean = VectorXd::Zero(khat);
            m.in_std = VectorXd::Ones(khat);
            return m;
        }

        /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
        static MlpModel random(int khat, std::uint64_t seed)
        {
            MlpModel m = zeros(khat);
            Rng rng(derive_seed(seed, stream::training));
            for (int l = 0; l < 4; ++l)
            {
                const double r = 1.0 / std::sqrt(static_cast<double>(m.W[l].cols()));
                for (Index j = 0; j < m.W[l].cols(); ++j)
                    for (Index i = 0; i < m.W[l].rows(); ++i)
                        m.W[l](i, j) = rng.uniform(-r, r);
                for (Index i = 0; i < m.b[l].size(); ++i)
                    m.b[l](i) = rng.uniform(-r, r);
            }
            return m;
        }

        VectorXd parameters() const
        {
            VectorXd th(parameter_count());
            Index o = 0;
            for (int l = 0; l < 4; ++l)
            {
                for (Index i = 0; i < W[l].rows(); ++i)
                    for (Index j = 0; j < W[l].cols(); ++j)
                        th(o++) = W[l](i, j);
                th.segment(o, b[l].size()) = b[l];
                o += b[l].size();
            }
            return th;
        }

        void set_parameters(const VectorXd &th)
        {
            detail::require_shape(th.size() == parameter_count(), "MlpModel: parameter count mismatch");
            Index o = 0;
            for (int l = 0; l < 4; ++l)
            {
                for (Index i = 0; i < W[l].rows(); ++i)
                    for (Index j = 0; j < W[l].cols(); ++j)
                        W[l](i, j) = th(o++);
                b[l] = th.segment(o, b[l].size());
                o += b[l].size();
            }
        }

        bool operator==(const MlpModel &o) const
        {
            if (khat != o.khat || in_mean != o.in_mean || in_std != o.in_std)
                return false;
            for (int l = 0; l < 4; ++l)
                if (W[l] != o.W[l] || b[l] != o.b[l])
                    return false;
            return true;
        }
    };

    /// The khat largest entries of a row, descending. O(K) selection plus a sort of khat items.
    inline VectorXd top_khat(const VectorXd &row, Index khat)
    {
        if (khat < 1 || khat > row.size())
            throw domain_error("top_khat: need 1 <= khat <= K");
        // single pass, kept sorted in descending order
        VectorXd top(khat);
        Index n = 0;
        for (Index i = 0; i < row.size(); ++i)
        {
            const double x = row(i);
            if (n == khat && !(x > top(khat - 1)))
                continue;
            Index j = n < khat ? n++ : khat - 1;
            for (; j > 0 && top(j - 1) < x; --j)
                top(j) = top(j - 1);
            top(j) = x;
        }
        return top;
    }

    inline VectorXd to_db(const VectorXd &lin) { return 10.0 * lin.array().log10(); }

    /// Unclamped network output for an already normalized input.
    inline double mlp_forward_normalized(const MlpModel &m, const VectorXd &z)
    {
        VectorXd a = z;
        for (int l = 0; l < 3; ++l)
            a = (m.W[l] * a + m.b[l]).array().tanh();
        const double out = (m.W[3] * a + m.b[3])(0);
        return std::max(0.0, out);
    }

    inline VectorXd normalize_input(const MlpModel &m, const VectorXd &beta_bar_db)
    {
        detail::require_shape(beta_bar_db.size() == m.khat, "mlp: input must have khat entries");
        return (beta_bar_db - m.in_mean).cwiseQuotient(m.in_std);
    }

    /// Rectified output in [0, inf) for a dB-domain input.
    inline double mlp_forward(const MlpModel &m, const VectorXd &beta_bar_db)
    {
        return mlp_forward_normalized(m, normalize_input(m, beta_bar_db));
    }

    /// p_NN in [0, 1] from the khat largest linear-scale coefficients of one AP.
    inline double predict_power(const MlpModel &m, const VectorXd &beta_bar)
    {
        return std::min(1.0, mlp_forward(m, to_db(beta_bar)));
    }

    /// Per-AP scalable step: p_m from the AP's own coefficients, then uniform eta row.
    struct ApPowerDecision
    {
        double p = 0.0;
        double eta = 0.0; // common eta_mk for every device
    };

    inline ApPowerDecision scalable_ap_power(const MlpModel &m, const VectorXd &beta_row, const VectorXd &gamma_row)
    {
        ApPowerDecision d;
        d.p = predict_power(m, top_khat(beta_row, m.khat));
        d.eta = d.p / gamma_row.sum();
        return d;
    }

    // ---- data ----

    struct TrainingSet
    {
        MatrixXd inputs;  // N x khat, dB, descending per row
        VectorXd targets; // N, in [0,1]
        std::vector<std::uint64_t> realization_seed;
        std::vector<Index> ap_index;

        Index size() const { return targets.size(); }
    };

    struct DatasetOptions
    {
        PilotKind pilots = PilotKind::random;
        DlOptions dl{};
        std::size_t threads = 0;
    };

    /// One sample per AP per realization: (top_khat(beta row) in dB, p_opt_m). Realization r
    /// uses the seed derive_seed(seed, stream::training, r); wrap-around is forced on.
    inline TrainingSet build_dataset(const NetworkConfig &config, std::size_t n_realizations, Index khat,
                                     std::uint64_t seed, const DatasetOptions &opt = {})
    {
        if (khat < 1 || khat > static_cast<Index>(config.K))
            throw domain_error("build_dataset: need 1 <= khat <= K");
        NetworkConfig cfg = config;
        cfg.wrap_around = true;
        cfg.validate();
        const Index M = static_cast<Index>(cfg.M);

        std::vector<MatrixXd> rows(n_realizations);
        std::vector<VectorXd> targets(n_realizations);
        std::vector<std::uint64_t> seeds(n_realizations);
        parallel_for(
            n_realizations,
            [&](std::size_t r)
            {
                const std::uint64_t rs = derive_seed(seed, stream::training, r);
                seeds[r] = rs;
                const NetworkRealization net = generate_network(cfg, rs);
                Rng prng(derive_seed(rs, stream::pilots));
                const PilotSet pilots = make_pilots(opt.pilots, static_cast<Index>(cfg.K),
                                                    static_cast<Index>(cfg.tau), prng);
                const MatrixXd gamma = lmmse_projections(pilots.psi, net.beta, cfg.rho_p()).gamma;
                BisectionResult res;
                try
                {
                    res = maxmin_bisection(gamma, net.beta, cfg.rho_d(), opt.dl);
                }
                catch (const solver_error &e)
                {
                    throw solver_error(std::string(e.what()) + " [realization seed " + std::to_string(rs) + "]");
                }
                rows[r].resize(M, khat);
                for (Index m = 0; m < M; ++m)
                    rows[r].row(m) = to_db(top_khat(net.beta.row(m).transpose(), khat)).transpose();
                targets[r] = res.p_opt.cwiseMin(1.0);
            },
            opt.threads);

        const Index N = static_cast<Index>(n_realizations) * M;
        TrainingSet raw;
        raw.inputs.resize(N, khat);
        raw.targets.resize(N);
        for (std::size_t r = 0; r < n_realizations; ++r)
        {
            raw.inputs.middleRows(static_cast<Index>(r) * M, M) = rows[r];
            raw.targets.segment(static_cast<Index>(r) * M, M) = targets[r];
            for (Index m = 0; m < M; ++m)
            {
                raw.realization_seed.push_back(seeds[r]);
                raw.ap_index.push_back(m);
            }
        }

        // Fisher-Yates with the raw 64-bit engine output, so the order is fixed by the seed.
        std::vector<Index> order(static_cast<std::size_t>(N));
        std::iota(order.begin(), order.end(), Index{0});
        Rng srng(derive_seed(seed, stream::training, ~std::uint64_t{0}));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[srng.next_u64() % i]);

        TrainingSet out;
        out.inputs.resize(N, khat);
        out.targets.resize(N);
        for (Index i = 0; i < N; ++i)
        {
            out.inputs.row(i) = raw.inputs.row(order[i]);
            out.targets(i) = raw.targets(order[i]);
            out.realization_seed.push_back(raw.realization_seed[order[i]]);
            out.ap_index.push_back(raw.ap_index[order[i]]);
        }
        return out;
    }

    inline TrainingSet subset(const TrainingSet &ds, Index begin, Index end)
    {
        TrainingSet out;
        out.inputs = ds.inputs.middleRows(begin, end - begin);
        out.targets = ds.targets.segment(begin, end - begin);
        out.realization_seed.assign(ds.realization_seed.begin() + begin, ds.realization_seed.begin() + end);
        out.ap_index.assign(ds.ap_index.begin() + begin, ds.ap_index.begin() + end);
        return out;
    }

    // ---- training ----

    struct TrainOptions
    {
        std::size_t max_epochs = 300;
        double lambda0 = 1e-3;
        double grad_tol = 1e-8;
        double lambda_max = 1e10;
        double validation_fraction = 0.1;
        bool standardize = true;
    };

    struct TrainReport
    {
        std::vector<double> loss;      // training MSE after every accepted step
        std::vector<double> val_rmse;  // validation RMSE after every accepted step
        std::size_t epochs = 0;
        std::size_t rejected = 0;
        double final_lambda = 0.0;
        std::string stop_reason;
        double train_rmse = 0.0;
        double validation_rmse = 0.0;
    };

    namespace detail
    {
        // Residuals r_i = f(x_i) - y_i and their Jacobian w.r.t. the flat parameter vector.
        inline void mlp_residuals(const MlpModel &m, const MatrixXd &Z, const VectorXd &y, VectorXd &r,
                                  MatrixXd *J)
        {
            const Index N = Z.rows();
            const Index P = m.parameter_count();
            r.resize(N);
            if (J)
                J->resize(N, P);
            std::array<VectorXd, 4> act; // act[0] input, act[l] after hidden layer l
            for (Index i = 0; i < N; ++i)
            {
                act[0] = Z.row(i).transpose();
                for (int l = 0; l < 3; ++l)
                    act[l + 1] = (m.W[l] * act[l] + m.b[l]).array().tanh();
                const double pre = (m.W[3] * act[3] + m.b[3])(0);
                r(i) = std::max(0.0, pre) - y(i);
                if (!J)
                    continue;
                // backward: delta is d out / d pre-activation of each layer
                VectorXd delta = VectorXd::Constant(1, pre > 0.0 ? 1.0 : 0.0);
                std::array<VectorXd, 4> deltas;
                deltas[3] = delta;
                for (int l = 2; l >= 0; --l)
                {
                    const VectorXd back = m.W[l + 1].transpose() * deltas[l + 1];
                    deltas[l] = back.cwiseProduct((1.0 - act[l + 1].array().square()).matrix());
                }
                Index o = 0;
                for (int l = 0; l < 4; ++l)
                {
                    for (Index a = 0; a < m.W[l].rows(); ++a)
                        for (Index c = 0; c < m.W[l].cols(); ++c)
                            (*J)(i, o++) = deltas[l](a) * act[l](c);
                    for (Index a = 0; a < m.b[l].size(); ++a)
                        (*J)(i, o++) = deltas[l](a);
                }
            }
        }

        inline MatrixXd normalized_inputs(const MlpModel &m, const MatrixXd &X)
        {
            MatrixXd Z = X;
            for (Index j = 0; j < X.cols(); ++j)
                Z.col(j) = (X.col(j).array() - m.in_mean(j)) / m.in_std(j);
            return Z;
        }
    }

    /// Root mean squared error of the clamped predictions.
    inline double mlp_rmse(const MlpModel &m, const TrainingSet &ds)
    {
        if (ds.size() == 0)
            return 0.0;
        double acc = 0.0;
        for (Index i = 0; i < ds.size(); ++i)
        {
            const double p = std::min(1.0, mlp_forward(m, ds.inputs.row(i).transpose()));
            acc += (p - ds.targets(i)) * (p - ds.targets(i));
        }
        return std::sqrt(acc / static_cast<double>(ds.size()));
    }

    /// Levenberg-Marquardt on the mean squared error. The last `validation_fraction` of the
    /// (already shuffled) set is held out.
    inline MlpModel train_lm(const TrainingSet &ds, std::uint64_t init_seed, const TrainOptions &opt = {},
                             TrainReport *report = nullptr)
    {
        if (ds.size() == 0)
            throw training_error("train_lm: empty dataset");
        const Index khat = ds.inputs.cols();
        const Index n_val = ds.size() > 1 ? static_cast<Index>(std::floor(opt.validation_fraction *
                                                                           static_cast<double>(ds.size())))
                                          : 0;
        const Index n_train = ds.size() - n_val;
        const TrainingSet train = subset(ds, 0, n_train);
        const TrainingSet val = subset(ds, n_train, ds.size());

        MlpModel m = MlpModel::random(static_cast<int>(khat), init_seed);
        if (opt.standardize)
        {
            m.in_mean = train.inputs.colwise().mean().transpose();
            for (Index j = 0; j < khat; ++j)
            {
                const double sd = std::sqrt((train.inputs.col(j).array() - m.in_mean(j)).square().mean());
                m.in_std(j) = sd > 0.0 ? sd : 1.0;
            }
        }
        const MatrixXd Z = detail::normalized_inputs(m, train.inputs);

        // Output bias set so the mean initial output equals the mean target.
        {
            double pre = 0.0;
            for (Index i = 0; i < n_train; ++i)
            {
                VectorXd a = Z.row(i).transpose();
                for (int l = 0; l < 3; ++l)
                    a = (m.W[l] * a + m.b[l]).array().tanh();
                pre += m.W[3].row(0).dot(a);
            }
            m.b[3](0) = train.targets.mean() - pre / static_cast<double>(n_train);
        }

        TrainReport rep;
        VectorXd r;
        MatrixXd J;
        double lambda = opt.lambda0;
        VectorXd theta = m.parameters();
        detail::mlp_residuals(m, Z, train.targets, r, nullptr);
        double loss = r.squaredNorm() / static_cast<double>(n_train);
        rep.loss.push_back(loss);
        rep.val_rmse.push_back(mlp_rmse(m, val));

        for (rep.epochs = 0; rep.epochs < opt.max_epochs;)
        {
            detail::mlp_residuals(m, Z, train.targets, r, &J);
            const VectorXd g = J.transpose() * r;
            if (g.norm() < opt.grad_tol)
            {
                rep.stop_reason = "gradient";
                break;
            }
            const MatrixXd JtJ = J.transpose() * J;
            bool accepted = false;
            while (!accepted)
            {
                if (lambda > opt.lambda_max)
                    break;
                MatrixXd A = JtJ;
                A.diagonal().array() += lambda;
                Eigen::LLT<MatrixXd> llt(A);
                double jitter = 1e-12 * std::max(1.0, JtJ.diagonal().maxCoeff());
                for (int tries = 0; llt.info() != Eigen::Success && tries < 6; ++tries, jitter *= 100.0)
                {
                    A.diagonal().array() += jitter;
                    llt.compute(A);
                }
                if (llt.info() != Eigen::Success)
                    throw training_error("train_lm: singular normal equations");
                const VectorXd step = -llt.solve(g);
                MlpModel trial = m;
                trial.set_parameters(theta + step);
                VectorXd rt;
                detail::mlp_residuals(trial, Z, train.targets, rt, nullptr);
                const double trial_loss = rt.squaredNorm() / static_cast<double>(n_train);
                if (trial_loss < loss)
                {
                    m = trial;
                    theta += step;
                    loss = trial_loss;
                    lambda /= 10.0;
                    accepted = true;
                }
                else
                {
                    lambda *= 10.0;
                    ++rep.rejected;
                }
            }
            if (!accepted)
            {
                rep.stop_reason = "lambda";
                break;
            }
            ++rep.epochs;
            rep.loss.push_back(loss);
            rep.val_rmse.push_back(mlp_rmse(m, val));
        }
        if (rep.stop_reason.empty())
            rep.stop_reason = "max_epochs";
        rep.final_lambda = lambda;
        rep.train_rmse = mlp_rmse(m, train);
        rep.validation_rmse = mlp_rmse(m, val);
        if (report)
            *report = std::move(rep);
        return m;
    }

    // ---- serialization ----

    inline nlohmann::json mlp_to_json(const MlpModel &m)
    {
        nlohmann::json j;
        j["format"] = "cfmimo-mlp";
        j["version"] = MlpModel::format_version;
        j["layers"] = m.layer_sizes();
        j["hidden_activation"] = "tanh";
        j["output_activation"] = "relu";
        j["input_transform"] = "10log10, standardize";
        j["input_mean"] = std::vector<double>(m.in_mean.data(), m.in_mean.data() + m.in_mean.size());
        j["input_std"] = std::vector<double>(m.in_std.data(), m.in_std.data() + m.in_std.size());
        for (int l = 0; l < 4; ++l)
        {
            std::vector<double> w;
            for (Index i = 0; i < m.W[l].rows(); ++i)
                for (Index c = 0; c < m.W[l].cols(); ++c)
                    w.push_back(m.W[l](i, c));
            j["weights"].push_back(w);
            j["biases"].push_back(std::vector<double>(m.b[l].data(), m.b[l].data() + m.b[l].size()));
        }
        return j;
    }

    inline MlpModel mlp_from_json(const nlohmann::json &j)
    {
        if (j.value("format", "") != "cfmimo-mlp")
            throw config_error("mlp model: unknown format");
        if (j.value("version", 0) != MlpModel::format_version)
            throw config_error("mlp model: unsupported version");
        const auto layers = j.at("layers").get<std::vector<int>>();
        if (layers.size() != 5 || layers[1] != 4 || layers[2] != 4 || layers[3] != 4 || layers[4] != 1)
            throw config_error("mlp model: architecture must be [khat, 4, 4, 4, 1]");
        MlpModel m = MlpModel::zeros(layers[0]);
        const auto mean = j.at("input_mean").get<std::vector<double>>();
        const auto sd = j.at("input_std").get<std::vector<double>>();
        if (static_cast<int>(mean.size()) != m.khat || static_cast<int>(sd.size()) != m.khat)
            throw config_error("mlp model: normalization size mismatch");
        m.in_mean = Eigen::Map<const VectorXd>(mean.data(), m.khat);
        m.in_std = Eigen::Map<const VectorXd>(sd.data(), m.khat);
        for (int l = 0; l < 4; ++l)
        {
            const auto w = j.at("weights").at(l).get<std::vector<double>>();
            const auto b = j.at("biases").at(l).get<std::vector<double>>();
            if (static_cast<Index>(w.size()) != m.W[l].size() || static_cast<Index>(b.size()) != m.b[l].size())
                throw config_error("mlp model: layer " + std::to_string(l) + " size mismatch");
            Index o = 0;
            for (Index i = 0; i < m.W[l].rows(); ++i)
                for (Index c = 0; c < m.W[l].cols(); ++c)
                    m.W[l](i, c) = w[o++];
            m.b[l] = Eigen::Map<const VectorXd>(b.data(), m.b[l].size());
        }
        return m;
    }

    inline void save_mlp(const MlpModel &m, const std::string &path)
    {
        std::ofstream f(path);
        if (!f)
            throw config_error("cannot write model file " + path);
        f << mlp_to_json(m).dump(2) << '\n';
    }

    inline MlpModel load_mlp(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw config_error("cannot read model file " + path);
        return mlp_from_json(nlohmann::json::parse(f));
    }
}

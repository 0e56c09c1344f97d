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
#include "dl_sinr.hpp"
#include "estimator.hpp"
#include "io.hpp"
#include "mlp.hpp"
#include "netgen.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "ul_power.hpp"
#include "ul_sinr.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace cfmimo
{
    inline constexpr const char *version_string = "cfmimo 0.1.0";

    inline const std::vector<std::string> &experiment_ids()
    {
        static const std::vector<std::string> ids{"ul-rate-cdf", "ul-maxmin",      "ul-target-ee",  "dl-maxmin",
                                                  "dl-nn",       "dl-scalable",    "theorem1-probe", "if-properties"};
        return ids;
    }

    enum class UlPc
    {
        full_power,
        maxmin_exact,
        maxmin_rm,
        target_exact,
        target_rm
    };

    inline UlPc ul_pc_from_string(const std::string &s)
    {
        if (s == "full-power")
            return UlPc::full_power;
        if (s == "maxmin-exact")
            return UlPc::maxmin_exact;
        if (s == "maxmin-rm")
            return UlPc::maxmin_rm;
        if (s == "target-exact")
            return UlPc::target_exact;
        if (s == "target-rm")
            return UlPc::target_rm;
        throw config_error("unknown UL power control '" + s + "'");
    }

    inline std::string to_string(UlPc p)
    {
        switch (p)
        {
        case UlPc::full_power:
            return "full-power";
        case UlPc::maxmin_exact:
            return "maxmin-exact";
        case UlPc::maxmin_rm:
            return "maxmin-rm";
        case UlPc::target_exact:
            return "target-exact";
        case UlPc::target_rm:
            return "target-rm";
        }
        return "?";
    }

    inline const std::vector<std::string> &dl_schemes()
    {
        static const std::vector<std::string> s{"maxmin-opt", "fixed-p-nn", "uniform-nn", "uniform-full",
                                                "uniform-opt"};
        return s;
    }

    /// Experiment knobs. Unset optionals take per-experiment defaults.
    struct ExperimentParams
    {
        std::size_t n_realizations = 10;
        std::size_t n_draws = 200;
        PilotKind pilots = PilotKind::random;
        std::optional<std::string> ul_pc;
        std::optional<std::string> dl_pc;
        double target_rate = 0.1; // bits/s/Hz
        std::size_t drop = 0;     // K_p for max-min
        double up = 1e-8;
        UlReceiver receiver = UlReceiver::mmse;
        EstimatorKind estimator = EstimatorKind::lmmse;
        double rel_tol = 1e-3;
        double feas_tol = 1e-6;
        std::string nn_model;
        std::size_t khat = 4;
        bool compare_opt = false; // dl-scalable: also solve the max-min problem
        std::size_t probe_trials = 10000;
        std::size_t probe_pilot_sets = 8;
        std::size_t probe_ap = 0;
        std::vector<std::size_t> probe_taus{32, 256};
        std::size_t if_points = 100;
        bool dump_channels = false;
        // training (cfsim train-nn)
        std::size_t train_realizations = 313;
        std::size_t train_epochs = 300;
        double train_lambda0 = 1e-3;
        std::uint64_t train_init_seed = 1;
    };

    struct ExperimentSpec
    {
        std::string experiment;
        NetworkConfig network;
        ExperimentParams params;
        std::string out_dir;
        std::uint64_t seed = 1;

        void validate() const
        {
            const auto &ids = experiment_ids();
            if (std::find(ids.begin(), ids.end(), experiment) == ids.end())
                throw config_error("unknown experiment '" + experiment + "'");
            network.validate();
            if (params.n_realizations < 1)
                throw config_error("n_realizations must be >= 1");
            if (params.n_draws < 1)
                throw config_error("n_draws must be >= 1");
            if (params.ul_pc)
                ul_pc_from_string(*params.ul_pc);
            if (params.dl_pc &&
                std::find(dl_schemes().begin(), dl_schemes().end(), *params.dl_pc) == dl_schemes().end())
                throw config_error("unknown DL power control '" + *params.dl_pc + "'");
            const bool wants_nn = experiment == "dl-nn" || experiment == "dl-scalable" ||
                                  (experiment.rfind("dl-", 0) == 0 && params.dl_pc &&
                                   params.dl_pc->find("nn") != std::string::npos);
            if (!(params.target_rate > 0.0))
                throw config_error("target_rate must be > 0");
            if (params.drop >= network.K)
                throw config_error("drop must be < K");
            if (wants_nn && (params.nn_model.empty() || !std::filesystem::exists(params.nn_model)))
                throw config_error("experiment " + experiment + " needs an existing --nn-model file");
        }
    };

    inline ExperimentParams experiment_params_from_json(const json &j)
    {
        ExperimentParams p;
        if (j.is_null())
            return p;
        if (!j.is_object())
            throw config_error("experiment section must be a JSON object");
        detail::reject_unknown(j,
                               {"n_realizations", "n_draws", "pilots", "ul_pc", "dl_pc", "target_rate", "drop", "up",
                                "receiver", "estimator", "rel_tol", "feas_tol", "nn_model", "khat", "compare_opt",
                                "probe_trials", "probe_pilot_sets", "probe_ap", "probe_taus", "if_points",
                                "dump_channels", "train_realizations", "train_epochs", "train_lambda0",
                                "train_init_seed"},
                               "experiment section");
        detail::read_field(j, "n_realizations", p.n_realizations);
        detail::read_field(j, "n_draws", p.n_draws);
        if (j.contains("pilots"))
        {
            const auto s = j.at("pilots").get<std::string>();
            if (s != "random" && s != "orthonormal")
                throw config_error("pilots must be random or orthonormal");
            p.pilots = s == "random" ? PilotKind::random : PilotKind::orthonormal;
        }
        if (j.contains("ul_pc"))
            p.ul_pc = j.at("ul_pc").get<std::string>();
        if (j.contains("dl_pc"))
            p.dl_pc = j.at("dl_pc").get<std::string>();
        detail::read_field(j, "target_rate", p.target_rate);
        detail::read_field(j, "drop", p.drop);
        detail::read_field(j, "up", p.up);
        if (j.contains("receiver"))
        {
            const auto s = j.at("receiver").get<std::string>();
            if (s != "mmse" && s != "mr")
                throw config_error("receiver must be mmse or mr");
            p.receiver = s == "mmse" ? UlReceiver::mmse : UlReceiver::mr;
        }
        if (j.contains("estimator"))
        {
            const auto s = j.at("estimator").get<std::string>();
            if (s != "lmmse" && s != "projection")
                throw config_error("estimator must be lmmse or projection");
            p.estimator = s == "lmmse" ? EstimatorKind::lmmse : EstimatorKind::projection;
        }
        detail::read_field(j, "rel_tol", p.rel_tol);
        detail::read_field(j, "feas_tol", p.feas_tol);
        detail::read_field(j, "nn_model", p.nn_model);
        detail::read_field(j, "khat", p.khat);
        detail::read_field(j, "compare_opt", p.compare_opt);
        detail::read_field(j, "probe_trials", p.probe_trials);
        detail::read_field(j, "probe_pilot_sets", p.probe_pilot_sets);
        detail::read_field(j, "probe_ap", p.probe_ap);
        detail::read_field(j, "probe_taus", p.probe_taus);
        detail::read_field(j, "if_points", p.if_points);
        detail::read_field(j, "dump_channels", p.dump_channels);
        detail::read_field(j, "train_realizations", p.train_realizations);
        detail::read_field(j, "train_epochs", p.train_epochs);
        detail::read_field(j, "train_lambda0", p.train_lambda0);
        detail::read_field(j, "train_init_seed", p.train_init_seed);
        return p;
    }

    /// Config file layout: {"network": {...}, "experiment": {...}, "seed": N}.
    inline ExperimentSpec experiment_spec_from_json(const json &j)
    {
        if (!j.is_object())
            throw config_error("config must be a JSON object");
        detail::reject_unknown(j, {"network", "experiment", "seed"}, "config");
        ExperimentSpec s;
        s.network = network_config_from_json(j.value("network", json::object()));
        s.params = experiment_params_from_json(j.value("experiment", json()));
        s.seed = s.network.seed;
        detail::read_field(j, "seed", s.seed);
        return s;
    }

    // ---- report ----

    struct RateRow
    {
        std::size_t realization = 0;
        std::size_t device = 0;
        std::vector<double> values; // one per column
    };

    enum class RunStatus
    {
        ok,
        infeasible
    };

    struct ReportBundle
    {
        std::string experiment;
        std::vector<std::string> columns; // "rate", "throughput", then extras
        std::vector<RateRow> rows;
        json ee = json::object();
        json trace = json::object();
        json metadata = json::object();
        RunStatus status = RunStatus::ok;
        std::vector<std::string> notes;

        std::vector<double> column(const std::string &name) const
        {
            const auto it = std::find(columns.begin(), columns.end(), name);
            if (it == columns.end())
                throw config_error("report has no column '" + name + "'");
            const auto c = static_cast<std::size_t>(it - columns.begin());
            std::vector<double> out;
            out.reserve(rows.size());
            for (const auto &r : rows)
                out.push_back(r.values[c]);
            return out;
        }

        std::string rates_csv() const
        {
            std::vector<std::string> header{"device", "realization"};
            header.insert(header.end(), columns.begin(), columns.end());
            CsvWriter w(header);
            for (const auto &r : rows)
            {
                std::vector<std::string> f{std::to_string(r.device), std::to_string(r.realization)};
                for (double v : r.values)
                    f.push_back(format_double(v));
                w.row(f);
            }
            return w.str();
        }

        /// One empirical CDF per rate column.
        std::string cdf_csv() const
        {
            CsvWriter w({"series", "value", "fraction"});
            for (const auto &c : columns)
            {
                if (c.rfind("rate", 0) != 0 || rows.empty())
                    continue;
                const auto v = column(c);
                for (const auto &p : emit_cdf(v))
                    w.row({c, format_double(p.value), format_double(p.fraction)});
            }
            return w.str();
        }
    };

    inline void sort_rows(std::vector<RateRow> &rows)
    {
        std::stable_sort(rows.begin(), rows.end(), [](const RateRow &a, const RateRow &b)
                         { return a.realization != b.realization ? a.realization < b.realization : a.device < b.device; });
    }

    inline void write_report(const ReportBundle &r, const std::string &dir)
    {
        std::filesystem::create_directories(dir);
        const std::filesystem::path d(dir);
        write_text_file((d / "rates.csv").string(), r.rates_csv());
        write_text_file((d / "cdf.csv").string(), r.cdf_csv());
        write_text_file((d / "ee.json").string(), r.ee.dump(2) + "\n");
        json tr = r.trace;
        tr["metadata"] = r.metadata;
        tr["status"] = r.status == RunStatus::ok ? "ok" : "infeasible";
        tr["notes"] = r.notes;
        write_text_file((d / "trace.json").string(), tr.dump(2) + "\n");
    }

    // ---- shared pieces ----

    /// One network drop with its pilots and estimator projections.
    struct Instance
    {
        std::size_t index = 0;
        std::uint64_t seed = 0;
        NetworkRealization net;
        PilotSet pilots;
        EstimationResult est;
    };

    inline std::uint64_t realization_seed(std::uint64_t master, std::size_t r)
    {
        return derive_seed(master, stream::realization, r);
    }

    inline Instance make_instance(const NetworkConfig &cfg, std::uint64_t master, std::size_t r, PilotKind pilots,
                                  EstimatorKind estimator = EstimatorKind::lmmse)
    {
        Instance in;
        in.index = r;
        in.seed = realization_seed(master, r);
        in.net = generate_network(cfg, in.seed);
        Rng prng(derive_seed(in.seed, stream::pilots));
        in.pilots = make_pilots(pilots, static_cast<Index>(cfg.K), static_cast<Index>(cfg.tau), prng);
        in.est = make_estimator(estimator, in.pilots.psi, in.net.beta, cfg.rho_p());
        return in;
    }

    inline double target_sinr(double rate_bits) { return std::exp2(rate_bits) - 1.0; }

    namespace detail
    {
        inline json vec_json(const VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

        inline void add_rows(std::vector<RateRow> &rows, std::size_t r, const std::vector<VectorXd> &cols)
        {
            const Index K = cols.front().size();
            for (Index k = 0; k < K; ++k)
            {
                RateRow row{r, static_cast<std::size_t>(k), {}};
                for (const auto &c : cols)
                    row.values.push_back(c(k));
                rows.push_back(std::move(row));
            }
        }

        inline VectorXd rates_of(const VectorXd &sinr) { return (1.0 + sinr.array()).log2(); }

        // Sum throughput (bits/s) per joule of radiated power (powers in mW).
        inline double bits_per_joule(const VectorXd &throughput, double power_mw)
        {
            if (!(power_mw > 0.0))
                throw domain_error("energy efficiency undefined for zero radiated power");
            return throughput.sum() / (1e-3 * power_mw);
        }

        inline void dump_channel(const std::string &dir, const Instance &in)
        {
            std::filesystem::create_directories(dir);
            Rng rng(derive_seed(derive_seed(in.seed, stream::small_scale), stream::small_scale, 0));
            const ChannelDraw ch = draw_channel(in.net.beta, rng);
            std::vector<std::string> header;
            for (Index k = 0; k < ch.g.cols(); ++k)
            {
                header.push_back("re" + std::to_string(k));
                header.push_back("im" + std::to_string(k));
            }
            CsvWriter w(header);
            for (Index m = 0; m < ch.g.rows(); ++m)
            {
                std::vector<std::string> f;
                for (Index k = 0; k < ch.g.cols(); ++k)
                {
                    f.push_back(format_double(ch.g(m, k).real()));
                    f.push_back(format_double(ch.g(m, k).imag()));
                }
                w.row(f);
            }
            w.save((std::filesystem::path(dir) / ("channels_r" + std::to_string(in.index) + ".csv")).string());
        }

        struct UlRun
        {
            UlRateResult rates;
            bool infeasible = false;
            json info = json::object();
        };

        // Ergodic rates under one UL power-control scheme. RM-based schemes fix eta from
        // large-scale data; exact-SINR schemes rerun per coherence block.
        inline UlRun run_ul_scheme(UlPc pc, const Instance &in, const NetworkConfig &cfg, const ExperimentParams &p)
        {
            const Index K = static_cast<Index>(cfg.K);
            const double rho_u = cfg.rho_u();
            const MatrixXd &beta = in.net.beta;
            const MatrixXd &gamma = in.est.gamma;
            const double S_t = target_sinr(p.target_rate);
            const std::uint64_t mc_seed = derive_seed(in.seed, stream::small_scale);
            UlRateOptions ro;
            ro.n_draws = p.n_draws;
            ro.receiver = p.receiver;
            ro.estimator = p.estimator;

            UlRun out;
            auto fixed = [&](const VectorXd &eta)
            {
                out.rates = achievable_rate_mc(beta, in.pilots, eta, cfg, mc_seed, ro);
                out.info["eta"] = vec_json(eta);
            };

            switch (pc)
            {
            case UlPc::full_power:
                fixed(VectorXd::Ones(K));
                break;
            case UlPc::maxmin_rm:
            {
                const PcResult r = maxmin_with_dropping(PcEngine::rm, MatrixXcd(), gamma, beta, rho_u,
                                                        static_cast<Index>(p.drop), p.up);
                out.info["iterations"] = r.iterations;
                out.info["trace"] = r.trace;
                fixed(r.eta);
                break;
            }
            case UlPc::target_rm:
            {
                const PcResult r = target_rm(gamma, beta, VectorXd::Ones(K), S_t, rho_u, PoorDeviceRule{p.up, std::nullopt});
                out.info["passes"] = r.passes;
                out.info["iterations"] = r.iterations;
                if (!r.feasible)
                {
                    out.infeasible = true;
                    out.info["violating"] = r.violating;
                    fixed(VectorXd::Zero(K));
                    break;
                }
                fixed(r.eta);
                break;
            }
            case UlPc::maxmin_exact:
            case UlPc::target_exact:
            {
                std::atomic<std::size_t> infeasible{0}, iterations{0};
                const UlPowerFn fn = [&](const MatrixXcd &g_hat, const EstimationResult &est) -> VectorXd
                {
                    const PcResult r = pc == UlPc::maxmin_exact
                                           ? maxmin_with_dropping(PcEngine::exact, g_hat, est.gamma, beta, rho_u,
                                                                  static_cast<Index>(p.drop), p.up)
                                           : target_exact(g_hat, est.gamma, beta, VectorXd::Ones(K), S_t, rho_u,
                                                          PoorDeviceRule{p.up, std::nullopt});
                    iterations += r.iterations;
                    if (!r.feasible)
                    {
                        ++infeasible;
                        return VectorXd::Zero(K);
                    }
                    return r.eta;
                };
                out.rates = achievable_rate_mc(beta, in.pilots, fn, cfg, mc_seed, ro);
                out.info["infeasible_blocks"] = infeasible.load();
                out.info["mean_iterations"] =
                    static_cast<double>(iterations.load()) / static_cast<double>(p.n_draws);
                out.info["mean_eta"] = vec_json(out.rates.mean_eta);
                out.infeasible = infeasible.load() > 0;
                break;
            }
            }
            return out;
        }

        inline void finish_ul(ReportBundle &rep, const std::vector<double> &ee_full,
                              const std::map<std::string, std::vector<double>> &ee_schemes)
        {
            auto mean = [](const std::vector<double> &v)
            { return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
            rep.ee["unit"] = "bit/J";
            rep.ee["full_power"] = mean(ee_full);
            for (const auto &[name, v] : ee_schemes)
            {
                rep.ee[name] = mean(v);
                rep.ee[name + "_over_full"] = mean(v) / mean(ee_full);
            }
        }
    }

    // ---- UL experiments ----

    inline ReportBundle run_ul_rates(const ExperimentSpec &spec, UlPc default_pc, bool with_rm_columns)
    {
        const auto &p = spec.params;
        const NetworkConfig &cfg = spec.network;
        const UlPc pc = p.ul_pc ? ul_pc_from_string(*p.ul_pc) : default_pc;
        ReportBundle rep;
        rep.columns = {"rate", "throughput"};
        if (with_rm_columns)
            rep.columns.insert(rep.columns.end(), {"rate_rm_ap1", "rate_rm_ap2"});
        if (pc != UlPc::full_power)
            rep.columns.push_back("rate_full_power");
        rep.trace["ul_pc"] = to_string(pc);
        std::vector<double> ee_full, ee_ctrl;

        for (std::size_t r = 0; r < p.n_realizations; ++r)
        {
            const Instance in = make_instance(cfg, spec.seed, r, p.pilots, p.estimator);
            if (p.dump_channels && !spec.out_dir.empty())
                detail::dump_channel(spec.out_dir, in);
            const detail::UlRun run = detail::run_ul_scheme(pc, in, cfg, p);
            if (run.infeasible)
            {
                rep.status = RunStatus::infeasible;
                rep.notes.push_back("realization " + std::to_string(r) + ": target infeasible");
            }
            std::vector<VectorXd> cols{run.rates.rate, run.rates.throughput};
            if (with_rm_columns)
            {
                const VectorXd eta = run.rates.mean_eta;
                cols.push_back(detail::rates_of(rm_ap1(in.est.gamma, in.net.beta, eta, cfg.rho_u()).sinr));
                cols.push_back(detail::rates_of(rm_ap2(in.est.gamma, in.net.beta, eta, cfg.rho_u()).sinr));
            }
            detail::UlRun full;
            if (pc != UlPc::full_power)
            {
                full = detail::run_ul_scheme(UlPc::full_power, in, cfg, p);
                cols.push_back(full.rates.rate);
                ee_full.push_back(detail::bits_per_joule(full.rates.throughput, cfg.P_u_mw * static_cast<double>(cfg.K)));
            }
            else
                ee_full.push_back(detail::bits_per_joule(run.rates.throughput, cfg.P_u_mw * static_cast<double>(cfg.K)));
            if (run.rates.mean_eta.sum() > 0.0)
                ee_ctrl.push_back(detail::bits_per_joule(run.rates.throughput, cfg.P_u_mw * run.rates.mean_eta.sum()));
            detail::add_rows(rep.rows, r, cols);
            json info = run.info;
            info["seed"] = in.seed;
            rep.trace["realizations"].push_back(info);
        }
        detail::finish_ul(rep, ee_full, {{to_string(pc), ee_ctrl}});
        return rep;
    }

    /// Full power against target-rate control on both engines.
    inline ReportBundle run_ul_target_ee(const ExperimentSpec &spec)
    {
        const auto &p = spec.params;
        const NetworkConfig &cfg = spec.network;
        const UlPc pc = p.ul_pc ? ul_pc_from_string(*p.ul_pc) : UlPc::target_rm;
        ReportBundle rep;
        rep.columns = {"rate", "throughput", "rate_full_power", "rate_target_exact", "rate_target_rm"};
        rep.trace["ul_pc"] = to_string(pc);
        rep.trace["target_rate"] = p.target_rate;
        rep.trace["target_sinr"] = target_sinr(p.target_rate);
        std::map<std::string, std::vector<double>> ee;
        std::vector<double> ee_full;
        const double full_power = cfg.P_u_mw * static_cast<double>(cfg.K);

        for (std::size_t r = 0; r < p.n_realizations; ++r)
        {
            const Instance in = make_instance(cfg, spec.seed, r, p.pilots, p.estimator);
            if (p.dump_channels && !spec.out_dir.empty())
                detail::dump_channel(spec.out_dir, in);
            const detail::UlRun full = detail::run_ul_scheme(UlPc::full_power, in, cfg, p);
            const detail::UlRun te = detail::run_ul_scheme(UlPc::target_exact, in, cfg, p);
            const detail::UlRun tr = detail::run_ul_scheme(UlPc::target_rm, in, cfg, p);
            ee_full.push_back(detail::bits_per_joule(full.rates.throughput, full_power));
            json info{{"seed", in.seed}, {"target_exact", te.info}, {"target_rm", tr.info}};
            for (const auto &[name, run] : {std::pair<std::string, const detail::UlRun *>{"target-exact", &te},
                                            {"target-rm", &tr}})
            {
                if (run->infeasible)
                {
                    if ((name == "target-exact") == (pc == UlPc::target_exact))
                        rep.status = RunStatus::infeasible;
                    rep.notes.push_back("realization " + std::to_string(r) + ": " + name + " infeasible");
                    continue;
                }
                ee[name].push_back(detail::bits_per_joule(run->rates.throughput, cfg.P_u_mw * run->rates.mean_eta.sum()));
            }
            const detail::UlRun &sel = pc == UlPc::target_exact ? te : (pc == UlPc::target_rm ? tr : full);
            detail::add_rows(rep.rows, r,
                             {sel.rates.rate, sel.rates.throughput, full.rates.rate, te.rates.rate, tr.rates.rate});
            rep.trace["realizations"].push_back(info);
        }
        detail::finish_ul(rep, ee_full, ee);
        if (rep.ee.contains(to_string(pc)))
        {
            rep.ee["controlled"] = rep.ee[to_string(pc)];
            rep.ee["ratio"] = rep.ee[to_string(pc) + "_over_full"];
        }
        return rep;
    }

    // ---- DL experiments ----

    inline VectorXd predict_ap_powers(const MlpModel &model, const MatrixXd &beta)
    {
        VectorXd p(beta.rows());
        for (Index m = 0; m < beta.rows(); ++m)
            p(m) = predict_power(model, top_khat(beta.row(m).transpose(), model.khat));
        return p;
    }

    namespace detail
    {
        struct DlRealization
        {
            std::vector<VectorXd> cols;
            json info = json::object();
            std::map<std::string, double> ee;
        };

        inline VectorXd dl_rates(const MatrixXd &eta, const Instance &in, const NetworkConfig &cfg)
        {
            return rates_of(dl_sinr_iot(eta, in.est, in.net.beta, in.pilots.psi, cfg.rho_d(), cfg.rho_p()));
        }

        inline DlOptions dl_options(const ExperimentParams &p)
        {
            DlOptions o;
            o.rel_tol = p.rel_tol;
            o.feas_tol = p.feas_tol;
            return o;
        }

        // Per-instance evaluation of the DL schemes, sharing one max-min solve.
        class DlSchemes
        {
        public:
            DlSchemes(const Instance &in, const NetworkConfig &cfg, const DlOptions &opt, const MlpModel *model)
                : in_(in), cfg_(cfg), opt_(opt), model_(model)
            {
            }

            DlPowerMatrix power(const std::string &scheme, json &info)
            {
                const MatrixXd &g = in_.est.gamma, &b = in_.net.beta;
                const Index M = g.rows();
                if (scheme == "maxmin-opt")
                {
                    const BisectionResult &bis = bisection();
                    json steps = json::array();
                    for (const auto &s : bis.trace)
                        steps.push_back(json{{"t", s.t}, {"feasible", s.feasible}, {"newton_steps", s.newton_steps}});
                    info["maxmin-opt"] = {{"t_star", bis.t_star},
                                          {"t_upper", bis.t_upper},
                                          {"min_sinr_orth", bis.min_sinr},
                                          {"bisection_steps", bis.bisection_steps},
                                          {"p_opt", vec_json(bis.p_opt)},
                                          {"trace", steps}};
                    return bis.power;
                }
                if (scheme == "uniform-full")
                    return uniform_power(VectorXd::Ones(M), g);
                if (scheme == "uniform-opt")
                    return uniform_power(bisection().p_opt.cwiseMin(1.0), g);
                if (!model_)
                    throw config_error("DL scheme " + scheme + " needs an NN model");
                if (scheme == "fixed-p-nn")
                {
                    const VectorXd p_nn = predict_ap_powers(*model_, b);
                    const FixedPResult fp = maxmin_fixed_p(p_nn, g, b, cfg_.rho_d(), opt_);
                    info["fixed-p-nn"] = {{"p_nn", vec_json(p_nn)},
                                          {"min_sinr_orth", fp.min_sinr},
                                          {"bisection_steps", fp.bisection_steps}};
                    return fp.power;
                }
                if (scheme == "uniform-nn")
                {
                    // each AP reads only its own beta and gamma rows
                    VectorXd p_nn(M);
                    MatrixXd eta(M, g.cols());
                    for (Index m = 0; m < M; ++m)
                    {
                        const ApPowerDecision d =
                            scalable_ap_power(*model_, b.row(m).transpose(), g.row(m).transpose());
                        p_nn(m) = d.p;
                        eta.row(m).setConstant(d.eta);
                    }
                    info["uniform-nn"] = {{"p_nn", vec_json(p_nn)}};
                    return make_dl_power(std::move(eta), g);
                }
                throw config_error("unknown DL power control '" + scheme + "'");
            }

        private:
            const BisectionResult &bisection()
            {
                if (!bis_)
                    bis_ = maxmin_bisection(in_.est.gamma, in_.net.beta, cfg_.rho_d(), opt_);
                return *bis_;
            }

            const Instance &in_;
            const NetworkConfig &cfg_;
            const DlOptions &opt_;
            const MlpModel *model_;
            std::optional<BisectionResult> bis_;
        };
    }

    /// Evaluates `schemes` on every realization (in parallel). The scheme chosen by
    /// --dl-pc, or `primary`, fills the rate column; every scheme also gets rate_<scheme>.
    inline ReportBundle run_dl(const ExperimentSpec &spec, std::vector<std::string> schemes,
                               const std::string &primary)
    {
        const auto &p = spec.params;
        const NetworkConfig &cfg = spec.network;
        const std::string main = p.dl_pc.value_or(primary);
        if (std::find(schemes.begin(), schemes.end(), main) == schemes.end())
            schemes.push_back(main);
        std::optional<MlpModel> model;
        if (!p.nn_model.empty())
            model = load_mlp(p.nn_model);
        const DlOptions opt = detail::dl_options(p);
        const double factor = throughput_factor(cfg);

        std::vector<detail::DlRealization> res(p.n_realizations);
        std::vector<Instance> inst(p.n_realizations);
        parallel_for(p.n_realizations,
                     [&](std::size_t r)
                     {
                         inst[r] = make_instance(cfg, spec.seed, r, p.pilots);
                         detail::DlSchemes ev(inst[r], cfg, opt, model ? &*model : nullptr);
                         detail::DlRealization &out = res[r];
                         std::map<std::string, VectorXd> rate;
                         for (const auto &s : schemes)
                         {
                             const DlPowerMatrix pw = ev.power(s, out.info);
                             rate[s] = detail::dl_rates(pw.eta, inst[r], cfg);
                             if (pw.p.sum() > 0.0)
                                 out.ee[s] = detail::bits_per_joule(factor * rate[s], cfg.P_d_mw * pw.p.sum());
                             if (s == main)
                                 out.info["orth_rates"] =
                                     detail::vec_json(detail::rates_of(dl_sinr_orth(pw.eta, inst[r].est.gamma,
                                                                                    inst[r].net.beta, cfg.rho_d())));
                         }
                         out.cols = {rate[main], factor * rate[main]};
                         for (const auto &s : schemes)
                             out.cols.push_back(rate[s]);
                     });

        ReportBundle rep;
        rep.columns = {"rate", "throughput"};
        for (const auto &s : schemes)
            rep.columns.push_back("rate_" + s);
        rep.trace["dl_pc"] = main;
        std::map<std::string, std::vector<double>> ee;
        for (std::size_t r = 0; r < p.n_realizations; ++r)
        {
            if (p.dump_channels && !spec.out_dir.empty())
                detail::dump_channel(spec.out_dir, inst[r]);
            detail::add_rows(rep.rows, r, res[r].cols);
            res[r].info["seed"] = inst[r].seed;
            rep.trace["realizations"].push_back(res[r].info);
            for (const auto &[k, v] : res[r].ee)
                ee[k].push_back(v);
        }
        rep.ee["unit"] = "bit/J";
        for (const auto &[k, v] : ee)
            rep.ee[k] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        if (rep.ee.contains(main) && rep.ee.contains("uniform-full"))
            rep.ee["ratio_to_uniform_full"] = rep.ee[main].get<double>() / rep.ee["uniform-full"].get<double>();
        return rep;
    }

    // ---- property experiments ----

    inline ReportBundle run_theorem1_probe(const ExperimentSpec &spec)
    {
        const auto &p = spec.params;
        const NetworkConfig &cfg = spec.network;
        const Instance in = make_instance(cfg, spec.seed, 0, p.pilots);
        if (p.probe_ap >= cfg.M)
            throw config_error("probe_ap must be < M");
        const auto pts = estimate_covariance_probe(in.net.beta.row(static_cast<Index>(p.probe_ap)).transpose(),
                                                   cfg.rho_p(), p.probe_taus, p.probe_trials, p.probe_pilot_sets,
                                                   PilotKind::random, derive_seed(in.seed, stream::probe));
        ReportBundle rep;
        rep.columns = {"rate", "throughput"};
        for (const auto &pt : pts)
            rep.trace["probe"].push_back(json{{"tau", pt.tau}, {"mean_abs_cov", pt.mean_abs_cov}});
        rep.trace["ap"] = p.probe_ap;
        rep.trace["trials"] = p.probe_trials;
        return rep;
    }

    inline ReportBundle run_if_properties(const ExperimentSpec &spec)
    {
        const auto &p = spec.params;
        const NetworkConfig &cfg = spec.network;
        ReportBundle rep;
        rep.columns = {"rate", "throughput"};
        bool all_ok = true;
        for (std::size_t r = 0; r < p.n_realizations; ++r)
        {
            const Instance in = make_instance(cfg, spec.seed, r, p.pilots, p.estimator);
            Rng rng(derive_seed(in.seed, stream::small_scale));
            const ChannelDraw ch = draw_channel(in.net.beta, rng);
            const ReceivedPilots rx = receive_pilots(in.pilots.psi, ch.g, cfg.rho_p(), rng);
            const MatrixXcd g_hat = estimate_channels(in.est, rx.y);
            // random positive rate weights
            VectorXd u(static_cast<Index>(cfg.K));
            for (Index k = 0; k < u.size(); ++k)
                u(k) = rng.uniform(0.2, 1.0);
            const ControlWeights w{u / u.norm(), VectorXd::Ones(u.size())};
            const ProbeReport fx = probe_exact_interference(g_hat, in.est.gamma, in.net.beta, w, cfg.rho_u(),
                                                            p.if_points, derive_seed(in.seed, stream::probe, 0));
            const ProbeReport fq = probe_rm_interference(in.est.gamma, in.net.beta, w, cfg.rho_u(), p.if_points,
                                                         derive_seed(in.seed, stream::probe, 1));
            auto to_json = [](const ProbeReport &x)
            {
                return json{{"positivity", x.positivity},
                            {"monotonicity", x.monotonicity},
                            {"scalability", x.scalability},
                            {"checks", x.checks},
                            {"witness", x.witness}};
            };
            rep.trace["realizations"].push_back({{"seed", in.seed}, {"exact", to_json(fx)}, {"rm", to_json(fq)}});
            all_ok = all_ok && fx.ok() && fq.ok();
        }
        rep.trace["all_hold"] = all_ok;
        return rep;
    }

    // ---- entry point ----

    inline json spec_metadata(const ExperimentSpec &spec)
    {
        json seeds = json::array();
        const std::size_t n = spec.experiment == "theorem1-probe" ? 1 : spec.params.n_realizations;
        for (std::size_t r = 0; r < n; ++r)
            seeds.push_back(realization_seed(spec.seed, r));
        return {{"version", version_string},
                {"experiment", spec.experiment},
                {"seed", spec.seed},
                {"realization_seeds", seeds},
                {"network", network_config_to_json(spec.network)},
                {"n_realizations", spec.params.n_realizations},
                {"n_draws", spec.params.n_draws},
                {"target_rate", spec.params.target_rate},
                {"drop", spec.params.drop},
                {"up", spec.params.up},
                {"rel_tol", spec.params.rel_tol},
                {"feas_tol", spec.params.feas_tol},
                {"pilots", spec.params.pilots == PilotKind::random ? "random" : "orthonormal"},
                {"receiver", spec.params.receiver == UlReceiver::mmse ? "mmse" : "mr"},
                {"estimator", spec.params.estimator == EstimatorKind::lmmse ? "lmmse" : "projection"}};
    }

    /// Runs the experiment and, when spec.out_dir is set, writes rates.csv, cdf.csv,
    /// ee.json and trace.json there.
    inline ReportBundle run_experiment(const ExperimentSpec &spec)
    {
        spec.validate();
        ReportBundle rep;
        const std::string &e = spec.experiment;
        if (e == "ul-rate-cdf")
            rep = run_ul_rates(spec, UlPc::full_power, true);
        else if (e == "ul-maxmin")
            rep = run_ul_rates(spec, UlPc::maxmin_rm, false);
        else if (e == "ul-target-ee")
            rep = run_ul_target_ee(spec);
        else if (e == "dl-maxmin")
            rep = run_dl(spec, {"maxmin-opt", "uniform-opt", "uniform-full"}, "maxmin-opt");
        else if (e == "dl-nn")
            rep = run_dl(spec, {"fixed-p-nn", "maxmin-opt", "uniform-full"}, "fixed-p-nn");
        else if (e == "dl-scalable")
        {
            std::vector<std::string> s{"uniform-nn", "uniform-full"};
            if (spec.params.compare_opt)
                s.insert(s.end(), {"maxmin-opt", "uniform-opt"});
            rep = run_dl(spec, s, "uniform-nn");
        }
        else if (e == "theorem1-probe")
            rep = run_theorem1_probe(spec);
        else
            rep = run_if_properties(spec);
        rep.experiment = e;
        sort_rows(rep.rows);
        rep.metadata = spec_metadata(spec);
        if (!spec.out_dir.empty())
            write_report(rep, spec.out_dir);
        return rep;
    }

    /// Dataset generation and LM training from a spec's network and training knobs.
    inline MlpModel train_nn(const ExperimentSpec &spec, TrainReport *report = nullptr)
    {
        const auto &p = spec.params;
        if (p.khat < 1 || p.khat > spec.network.K)
            throw config_error("khat must lie in [1, K]");
        DatasetOptions dopt;
        dopt.dl = detail::dl_options(p);
        const TrainingSet ds =
            build_dataset(spec.network, p.train_realizations, static_cast<Index>(p.khat), spec.seed, dopt);
        TrainOptions topt;
        topt.max_epochs = p.train_epochs;
        topt.lambda0 = p.train_lambda0;
        return train_lm(ds, p.train_init_seed, topt, report);
    }
}

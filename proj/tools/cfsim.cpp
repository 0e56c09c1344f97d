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


// cfsim: experiment runner and NN trainer.
//
//   cfsim run --config cfg.json --experiment ul-rate-cdf --out results/ [--seed N] ...
//   cfsim train-nn --config cfg.json --out model.json
//
// Exit codes: 0 ok, 1 infeasible target reported, 2 error (JSON on stderr).

#include <cfmimo/cfmimo.hpp>

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace
{
    int report_error(const std::string &kind, const std::string &what)
    {
        const cfmimo::json j{{"error", {{"kind", kind}, {"message", what}}}};
        std::cerr << j.dump() << '\n';
        return 2;
    }

    std::string error_kind(const std::exception &e)
    {
        using namespace cfmimo;
        if (dynamic_cast<const config_error *>(&e))
            return "config";
        if (dynamic_cast<const dimension_error *>(&e))
            return "dimension";
        if (dynamic_cast<const cfmimo::domain_error *>(&e))
            return "domain";
        if (dynamic_cast<const conditioning_error *>(&e))
            return "conditioning";
        if (dynamic_cast<const convergence_error *>(&e))
            return "convergence";
        if (dynamic_cast<const solver_error *>(&e))
            return "solver";
        if (dynamic_cast<const training_error *>(&e))
            return "training";
        if (dynamic_cast<const generation_error *>(&e))
            return "generation";
        return "internal";
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"cell-free massive MIMO IoT simulator"};
    app.require_subcommand(1);

    std::string config_path, experiment, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> ul_pc, dl_pc, nn_model;
    std::optional<double> target_rate, up, rel_tol, feas_tol;
    std::optional<std::size_t> drop, khat, realizations, draws;
    bool dump_channels = false;

    auto *run = app.add_subcommand("run", "run one experiment");
    run->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    run->add_option("--experiment", experiment, "experiment id")
        ->required()
        ->check(CLI::IsMember(cfmimo::experiment_ids()));
    run->add_option("--out", out, "output directory")->required();
    run->add_option("--seed", seed, "master seed (overrides the config)");
    run->add_option("--ul-pc", ul_pc, "UL power control")
        ->check(CLI::IsMember({"maxmin-exact", "maxmin-rm", "target-exact", "target-rm", "full-power"}));
    run->add_option("--target-rate", target_rate, "target rate in bits/s/Hz");
    run->add_option("--drop", drop, "number of degraded devices K_p for max-min");
    run->add_option("--up", up, "weight of degraded devices");
    run->add_option("--dl-pc", dl_pc, "DL power control")->check(CLI::IsMember(cfmimo::dl_schemes()));
    run->add_option("--rel-tol", rel_tol, "bisection relative tolerance");
    run->add_option("--feas-tol", feas_tol, "cone feasibility tolerance");
    run->add_option("--nn-model", nn_model, "trained NN model (JSON)");
    run->add_option("--khat", khat, "number of NN inputs");
    run->add_option("--realizations", realizations, "number of network realizations");
    run->add_option("--draws", draws, "small-scale draws per realization");
    run->add_flag("--dump-channels", dump_channels, "write one channel draw per realization as CSV");

    auto *train = app.add_subcommand("train-nn", "build a dataset and train the power NN");
    train->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "model file to write")->required();
    train->add_option("--seed", seed, "master seed (overrides the config)");
    train->add_option("--khat", khat, "number of NN inputs");
    train->add_option("--realizations", realizations, "training realizations");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        return report_error("usage", e.what());
    }

    try
    {
        cfmimo::ExperimentSpec spec = cfmimo::experiment_spec_from_json(cfmimo::read_json_file(config_path));
        auto &p = spec.params;
        if (seed)
            spec.seed = *seed;
        if (khat)
            p.khat = *khat;
        if (run->parsed())
        {
            spec.experiment = experiment;
            spec.out_dir = out;
            if (ul_pc)
                p.ul_pc = *ul_pc;
            if (dl_pc)
                p.dl_pc = *dl_pc;
            if (nn_model)
                p.nn_model = *nn_model;
            if (target_rate)
                p.target_rate = *target_rate;
            if (up)
                p.up = *up;
            if (drop)
                p.drop = *drop;
            if (rel_tol)
                p.rel_tol = *rel_tol;
            if (feas_tol)
                p.feas_tol = *feas_tol;
            if (realizations)
                p.n_realizations = *realizations;
            if (draws)
                p.n_draws = *draws;
            p.dump_channels = p.dump_channels || dump_channels;
            const cfmimo::ReportBundle rep = cfmimo::run_experiment(spec);
            std::cout << cfmimo::json{{"experiment", rep.experiment},
                                      {"status", rep.status == cfmimo::RunStatus::ok ? "ok" : "infeasible"},
                                      {"rows", rep.rows.size()},
                                      {"ee", rep.ee},
                                      {"out", out}}
                             .dump()
                      << '\n';
            return rep.status == cfmimo::RunStatus::ok ? 0 : 1;
        }
        if (realizations)
            p.train_realizations = *realizations;
        cfmimo::TrainReport tr;
        const cfmimo::MlpModel model = cfmimo::train_nn(spec, &tr);
        cfmimo::save_mlp(model, out);
        std::cout << cfmimo::json{{"model", out},
                                  {"epochs", tr.epochs},
                                  {"stop", tr.stop_reason},
                                  {"train_rmse", tr.train_rmse},
                                  {"validation_rmse", tr.validation_rmse}}
                         .dump()
                  << '\n';
        return 0;
    }
    catch (const std::exception &e)
    {
        return report_error(error_kind(e), e.what());
    }
}

// SPDX-License-Identifier: Apache-2.0
//
// mtx: generate | train | analyze | report. Every failure exits nonzero and
// prints a single "error[<code>]: <message>" line to stderr; the code names
// are stable and machine-parsable. MTX_OUT_ROOT sets the default output root
// when neither --out nor the config name a directory.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtx/error.hpp"
#include "mtx/experiment.hpp"

namespace {

int exit_code(mtx::ErrorCode c) { return 2 + int(c); }

mtx::ExperimentConfig load_cfg(const std::string& path, const CLI::Option* seed_opt,
                               uint64_t seed) {
    auto cfg = mtx::load_experiment(path);
    if (seed_opt->count() > 0) mtx::apply_seed_override(cfg, seed);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multitask/multimodal experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    uint64_t seed = 0;

    auto* gen = app.add_subcommand("generate", "synthesize a dataset directory");
    gen->add_option("--config", config_path, "experiment config file")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "override every configured seed");
    gen->add_option("--out", out_dir, "output directory");

    auto* train = app.add_subcommand("train", "train one experiment into a run directory");
    train->add_option("--config", config_path, "experiment config file")->required();
    auto* train_seed = train->add_option("--seed", seed, "override every configured seed");
    train->add_option("--out", out_dir, "run directory");

    mtx::AnalyzeRequest req;
    auto* analyze = app.add_subcommand("analyze", "run one analysis over a run directory");
    analyze->add_option("analysis", req.analysis,
                        "correlation | combos | hierarchy | groups | maps")
        ->required();
    analyze->add_option("--run", req.run_dir, "run directory")->required();
    analyze->add_option("--out", req.out_dir, "report directory (default <run>/analysis)");
    analyze->add_option("--main", req.main_task, "main task (default from run.json)");
    analyze->add_option("--aux", req.aux_tasks, "auxiliary task, repeatable");
    analyze->add_option("--parent", req.parent_task, "hierarchy: parent-level task");
    analyze->add_option("--child", req.child_task, "hierarchy: child-level task");
    analyze->add_option("--parent-map", req.parent_map_file,
                        "hierarchy: file with one parent id per child class");
    analyze->add_option("--anchor-epoch", req.anchor_epoch, "combos: anchor epoch");
    analyze->add_option("--anchor", req.anchor, "combos: anchor combination (CC|CF|FC|FF)");
    analyze->add_option("--sample", req.sample_id, "maps: sample id");
    analyze->add_option("--epoch", req.epoch, "maps: epoch (default best epoch)");
    analyze->add_option("--fraction", req.subset_fraction, "correlation: eval subset fraction");
    analyze->add_option("--permutations", req.permutations, "correlation: permutation count");
    analyze->add_option("--seed", req.seed, "correlation: subset/permutation seed");

    std::vector<std::string> run_dirs;
    mtx::ReportOptions report_opts;
    auto* report = app.add_subcommand("report", "consolidated comparison of run directories");
    report->add_option("runs", run_dirs, "run directories")->required()->expected(-1);
    report->add_option("--format", report_opts.format, "markdown | csv");
    report->add_option("--out", report_opts.out_path, "also write the table to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error[usage]: %s\n", e.what());
        return exit_code(mtx::ErrorCode::usage);
    }

    try {
        if (*gen) {
            auto cfg = load_cfg(config_path, gen_seed, seed);
            auto res = mtx::cmd_generate(cfg, mtx::resolve_out_dir(out_dir, cfg));
            std::printf("%s\nwrote %s\n", res.summary.c_str(), res.dir.c_str());
        } else if (*train) {
            auto cfg = load_cfg(config_path, train_seed, seed);
            auto out = mtx::cmd_train(cfg, mtx::resolve_out_dir(out_dir, cfg));
            std::printf("run %s: best epoch %d (%s %.6g)\n", out.run_dir.c_str(),
                        out.result.best_epoch, out.result.best_metric_name.c_str(),
                        out.result.best_val_metric);
        } else if (*analyze) {
            if (!req.aux_tasks.empty()) req.aux_task = req.aux_tasks.front();
            for (const auto& f : mtx::cmd_analyze(req)) std::printf("%s\n", f.c_str());
        } else if (*report) {
            auto table = mtx::cmd_report(run_dirs, report_opts);
            std::fputs(table.c_str(), stdout);
        }
    } catch (const mtx::Error& e) {
        std::fprintf(stderr, "error[%s]: %s\n", mtx::error_code_name(e.code()), e.what());
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[io]: %s\n", e.what());
        return exit_code(mtx::ErrorCode::io);
    }
    return 0;
}

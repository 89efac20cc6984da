// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtx/config.hpp"
#include "mtx/multitask.hpp"

namespace mtx {

// The four experiment commands as library calls, so the command-line binary
// stays a thin argument-parsing shell and everything here is testable
// in-process. Each command owns one directory and is deterministic for a
// given config and seed (wall-clock facts are quarantined in run_info.txt).

// Output directory resolution, in priority order: the --out flag, the
// config's out_dir, then $<env_root>/<experiment name>, then ./<name>.
std::string resolve_out_dir(const std::string& flag_out, const ExperimentConfig& cfg,
                            const char* env_root = "MTX_OUT_ROOT");

struct GenerateResult {
    std::string dir;
    size_t samples = 0;
    size_t groups = 0;
    std::string summary; // one-paragraph account of what was generated
};

// Synthesizes cfg.dataset (which must name a generator kind, not a path) and
// writes the dataset files plus manifest into `dir`. Tree datasets also get
// their two parent-map text files for hierarchy analyses.
GenerateResult cmd_generate(const ExperimentConfig& cfg, const std::string& dir);

struct TrainOutcome {
    std::string run_dir;
    TrainResult result;
};

// Loads or regenerates the configured dataset, trains the configured model
// and writes the run artifacts plus run.json (experiment metadata: tasks,
// weights, best epoch) into `run_dir`.
TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::string& run_dir);

struct AnalyzeRequest {
    std::string run_dir;
    std::string analysis; // correlation | combos | hierarchy | groups | maps
    std::string out_dir;  // default: <run_dir>/analysis

    std::string main_task;              // default: run.json main task
    std::vector<std::string> aux_tasks; // correlation; default: all other tasks
    std::string aux_task;               // combos / groups / metric cells

    std::string parent_task, child_task; // hierarchy
    std::string parent_map_file;         // one parent id per line

    int anchor_epoch = 0; // combos
    std::string anchor = "FF";

    int64_t sample_id = -1; // maps
    int epoch = -1;         // maps; default: run.json best epoch

    double subset_fraction = 0.1; // correlation
    size_t permutations = 10000;
    uint64_t seed = 0;
};

// Dispatches one analysis over a run directory's prediction log and writes
// its CSV/JSON reports (or map images). Returns the files written.
std::vector<std::string> cmd_analyze(const AnalyzeRequest& req);

struct ReportOptions {
    std::string format = "markdown"; // or "csv"
    std::string out_path;            // also written here when non-empty
};

// Consolidated comparison: one row per run, best-epoch test metrics as
// columns (unioned across runs, blank where a run lacks a task). Best and
// second-best per column are flagged; ties share the best flag and leave
// second-best unassigned.
std::string cmd_report(const std::vector<std::string>& run_dirs, const ReportOptions& opts);

} // namespace mtx

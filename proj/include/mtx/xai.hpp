// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtx/predlog.hpp"

namespace mtx {

// Post-hoc analyses over prediction logs: error correlation between tasks,
// correctness-combination dynamics, hierarchy adherence, per-group
// aggregation and error-map export. Everything is a pure function of the log
// (plus explicit sample subsets), so analyses are reproducible from run
// artifacts alone.

// |pred - target| / max(|target|, 1e-6).
double relative_error(double pred, double target);

// Product-moment correlation; n >= 3 and both sequences non-constant, else
// an analyze error ("undefined correlation").
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Two-sided permutation p-value with +1 smoothing: (1 + #{|r_perm| >=
// |r_obs|}) / (permutations + 1). Always in (0, 1].
double pearson_pvalue(const std::vector<double>& x, const std::vector<double>& y,
                      size_t permutations, uint64_t seed);

// Scalar error of one prediction/target payload pair: mean relative error
// for regression, 0/1 for classification, pixel misclassification rate for
// class maps, pixel MAE for dense maps.
double payload_error(const Payload& pred, const Payload& target);

struct ErrorRecord {
    int epoch;
    int64_t sample_id;
    int64_t group_id;
    std::string task;
    double error;  // >= 0
};

// One record per log row, in log order.
std::vector<ErrorRecord> error_records(const PredictionLog& log);

// ---------------------------------------------------------- correlation ----

struct CorrelationConfig {
    double subset_fraction = 0.1;  // share of the eval pool entering the test
    size_t min_subset = 3;
    size_t permutations = 10000;
    uint64_t seed = 0;
};

struct CorrelationRow {
    int epoch;
    std::string aux_task;
    double r = 0, p = 0;  // meaningful only when defined
    size_t n = 0;
    bool defined = false;
    std::string note;  // reason when undefined
};

struct CorrelationReport {
    std::string main_task;
    std::vector<int64_t> subset;  // samples the rows were computed on
    std::vector<CorrelationRow> rows;
};

// Per epoch and aux task, the correlation between main-task and aux-task
// per-sample errors over a fixed, seed-chosen subset of `eval_pool`. An
// undefined correlation (constant errors) is reported per row, not thrown.
CorrelationReport correlation_over_epochs(const PredictionLog& log, const std::string& main_task,
                                          const std::vector<std::string>& aux_tasks,
                                          const std::vector<int64_t>& eval_pool,
                                          const CorrelationConfig& cfg);

// --------------------------------------------------------------- combos ----

// First letter: auxiliary level correct? Second: main level correct?
enum class Combo { CC, CF, FC, FF };

const char* combo_name(Combo c);
Combo combo_classify(bool aux_correct, bool main_correct);

struct ComboTimeline {
    std::string aux_task, main_task;
    std::vector<int> epochs;                    // ascending
    std::vector<std::array<size_t, 4>> counts;  // [CC, CF, FC, FF] per epoch
};

// Per-epoch combination counts over the log's eval set (optionally filtered
// to `samples`). Both tasks must log classification payloads.
ComboTimeline combo_timeline(const PredictionLog& log, const std::string& aux_task,
                             const std::string& main_task,
                             const std::vector<int64_t>& samples = {});

struct TransitionReport {
    int anchor_epoch = 0;
    Combo anchor = Combo::FF;
    std::vector<int64_t> anchor_samples;        // empty = explicit empty report
    std::vector<int> epochs;
    std::vector<std::array<double, 4>> ratios;  // sum to 1 per epoch
};

// Tracks the samples in `anchor` at `anchor_epoch` and reports their combo
// ratio at every logged epoch from the anchor on.
TransitionReport transition_tracking(const PredictionLog& log, const std::string& aux_task,
                                     const std::string& main_task, int anchor_epoch = 0,
                                     Combo anchor = Combo::FF,
                                     const std::vector<int64_t>& samples = {});

// ------------------------------------------------------------ hierarchy ----

struct HierarchyCounts {
    size_t cc_in = 0, cf_in = 0, cf_out = 0, fc_out = 0, ff_in = 0, ff_out = 0;
};

struct HierarchyReport {
    std::vector<int> epochs;
    std::vector<HierarchyCounts> counts;
};

// Combo label (aux = parent level, main = child level) plus adherence: "-in"
// iff parent_map[pred_child] == pred_parent. With consistent targets, CC is
// always -in and FC always -out, so those buckets need no suffix twin.
// parent_map must cover every child id in the log; targets must satisfy it.
HierarchyReport hierarchy_adherence(const PredictionLog& log, const std::vector<int>& parent_map,
                                    const std::string& parent_task, const std::string& child_task,
                                    const std::vector<int64_t>& samples = {});

// ------------------------------------------------- per-combo regression ----

struct ComboMetricRow {
    int epoch;
    std::array<double, 4> mean{};   // MAE per cell; meaningful when count > 0
    std::array<size_t, 4> count{};  // 0 = cell absent
};

struct ComboMetricReport {
    std::string value_task;
    std::vector<ComboMetricRow> rows;
};

// Mean absolute error of a regression task inside each combo cell per epoch.
ComboMetricReport metric_by_combo(const PredictionLog& log, const std::string& value_task,
                                  const std::string& aux_task, const std::string& main_task,
                                  const std::vector<int64_t>& samples = {});

// ----------------------------------------------------------- per group ----

struct GroupRow {
    int epoch;
    int64_t group_id;
    std::string split;  // from `split_of_sample`, "all" when unmapped
    size_t n = 0;
    double main_error = 0;    // mean payload error of the main task
    double aux_accuracy = 0;  // share of correct aux classifications
};

std::vector<GroupRow> per_group_aggregate(
    const PredictionLog& log, const std::string& main_task, const std::string& aux_task,
    const std::unordered_map<int64_t, std::string>& split_of_sample = {});

// ------------------------------------------------------------ map export ----

struct SegMaps {
    std::string task;
    size_t h = 0, w = 0;
    std::vector<int> target, pred;
    std::vector<double> mask;  // 1 where pred != target
};

struct DenseMaps {
    std::string task;
    size_t h = 0, w = 0;
    std::vector<double> target, pred, abs_error;
};

struct ErrorMapBundle {
    std::vector<SegMaps> seg;
    std::vector<DenseMaps> dense;
    std::vector<std::string> files;  // everything written, legend included
};

// Renders one sample's map tasks at one epoch into `out_dir`: paletted
// class maps (PPM), masks and dense maps (PGM, 255 levels) plus legend.json.
// The returned maps are unquantized; identities like mask mean == 1 -
// accuracy hold on them exactly.
ErrorMapBundle error_map_export(const PredictionLog& log, int64_t sample_id, int epoch,
                                const std::string& out_dir);

// -------------------------------------------------------------- writers ----

// CSV: one row per epoch x pair/cell. JSON: single summary object per
// analysis. Both byte-deterministic for a given report.
void save_csv(const CorrelationReport& r, const std::string& path);
void save_csv(const ComboTimeline& r, const std::string& path);
void save_csv(const TransitionReport& r, const std::string& path);
void save_csv(const HierarchyReport& r, const std::string& path);
void save_csv(const ComboMetricReport& r, const std::string& path);
void save_csv(const std::vector<GroupRow>& rows, const std::string& path);

void save_summary_json(const CorrelationReport& r, const std::string& path);
void save_summary_json(const ComboTimeline& r, const std::string& path);
void save_summary_json(const TransitionReport& r, const std::string& path);
void save_summary_json(const HierarchyReport& r, const std::string& path);
void save_summary_json(const ComboMetricReport& r, const std::string& path);
void save_summary_json(const std::vector<GroupRow>& rows, const std::string& path);

} // namespace mtx

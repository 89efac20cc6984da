// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "mtx/dataset.hpp"
#include "mtx/encoders.hpp"
#include "mtx/fusion.hpp"
#include "mtx/heads.hpp"
#include "mtx/optimizer.hpp"
#include "mtx/predlog.hpp"
#include "mtx/split.hpp"

namespace mtx {

// The central experimental knob: every modality is an input, a prediction
// target, or left out entirely. The main task's modality is always a target;
// remote-sensing imagery is always an input.

enum class Role { input, target, unused };

const char* role_name(Role r);

struct ModalityRoleConfig {
    std::vector<std::pair<std::string, Role>> roles; // declaration order = model order
    std::string main_task;

    Role role_of(const std::string& modality) const; // unlisted modalities are unused
};

struct TaskSpec {
    std::string name; // modality it predicts
    TaskKind kind = TaskKind::regression;
    double raw_weight = 1.0;
    std::string head_layout; // "", "linear", "mlp_bn", "mlp_drop"
};

// Loss kind is pinned by task kind: classification and multiclass
// segmentation use cross-entropy, everything else mean squared error.
bool task_uses_cross_entropy(TaskKind k);

// Metrics reported for a task, primary first (used for best-epoch selection).
std::vector<std::string> task_metric_names(TaskKind k);
bool metric_higher_is_better(const std::string& metric);

// Validated view of a role config against a dataset schema.
struct RolePlan {
    std::vector<std::string> inputs; // declaration order
    std::vector<TaskSpec> tasks;     // declaration order; weights default to 1
    std::string main_task;
    bool spatial = false; // main task predicts a map
};

RolePlan plan_roles(const Dataset& data, const ModalityRoleConfig& cfg);

// Split inputs straight off the dataset's sample/group/stratum ids.
std::vector<SplitItem> split_items(const Dataset& data);

// w_i / sum(w); all weights must be positive.
std::vector<double> normalize_weights(const std::vector<double>& raw);

// Weighted sum of per-task losses. Zero-weight tasks are skipped entirely so
// they contribute no gradient; negative weights are rejected.
RealTensor total_loss(const std::vector<RealTensor>& losses, const std::vector<double>& weights);

using Encoder = std::variant<TimeseriesEncoder, TabularEncoder, CategoricalEncoder, UnetEncoder,
                             CnnEncoder, FlatImageEncoder>;

struct EncoderSlot {
    std::string modality;
    bool map_latent = false;
    Encoder enc;
};

struct MultitaskModel {
    RolePlan plan;
    std::vector<EncoderSlot> encoders;
    SpatialFusion fusion; // spatial models only
    std::vector<std::pair<std::string, Head>> heads;
    ParamList params;
    size_t fused_dim = 0; // vector models: width after concatenation

    // Builds encoders and heads from the dataset schema; weights and head
    // layouts in `plan` must already be resolved.
    static MultitaskModel build(const Dataset& data, const RolePlan& plan, uint64_t seed);

    // Per-task predictions for one batch, in task declaration order.
    std::vector<std::pair<std::string, RealTensor>> forward(const Batch& batch, bool training,
                                                            Rng& rng);

    const TaskSpec& task(const std::string& name) const;
};

// Per-task loss tensors for a batch, in task order. The computation of a
// task that fails numerically is reported under that task's name.
std::vector<std::pair<std::string, RealTensor>> task_losses(
    MultitaskModel& model, const Batch& batch,
    const std::vector<std::pair<std::string, RealTensor>>& preds);

struct MetricRow {
    int epoch;
    std::string split;
    std::string task;
    std::string metric;
    double value;
};

struct EvalResult {
    std::vector<MetricRow> metrics;  // task-major, metric order per kind
    std::vector<PredRow> log_rows;   // one per (sample, task)
};

// Deterministic full-split inference in eval mode (frozen batch statistics,
// no dropout).
EvalResult evaluate(MultitaskModel& model, const Dataset& data,
                    const std::vector<int64_t>& sample_ids, const std::string& split_label,
                    int epoch, size_t batch_size);

struct TrainConfig {
    int epochs = 20;
    size_t batch_size = 64;
    double lr = 1e-3;
    uint64_t seed = 1;
    std::string weight_by_task; // classification task whose inverse class
                                // frequencies weight the sampling; "" = off
    std::string out_dir;        // run directory, created if missing
};

struct TrainResult {
    int best_epoch = 0;
    double best_val_metric = 0;
    std::string best_metric_name;
    std::vector<MetricRow> metrics;
};

// Full training run: epochs are numbered 0..epochs-1 and each is logged
// after its optimization pass, so epoch 0 reflects the state after the first
// pass. Writes metrics.csv, predictions.csv, splits.csv, run_info.txt,
// checkpoint_best.bin and checkpoint_final.bin into cfg.out_dir.
TrainResult train(MultitaskModel& model, const Dataset& data, const SplitAssignment& split,
                  const TrainConfig& cfg);

} // namespace mtx

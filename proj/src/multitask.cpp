// SPDX-License-Identifier: Apache-2.0
#include "mtx/multitask.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>

#include "mtx/checkpoint.hpp"
#include "mtx/metrics.hpp"

namespace mtx {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

const char* role_name(Role r) {
    switch (r) {
        case Role::input: return "input";
        case Role::target: return "target";
        case Role::unused: return "unused";
    }
    return "?";
}

Role ModalityRoleConfig::role_of(const std::string& modality) const {
    for (const auto& [name, role] : roles)
        if (name == modality) return role;
    return Role::unused;
}

bool task_uses_cross_entropy(TaskKind k) {
    return k == TaskKind::classification || k == TaskKind::multiclass_seg;
}

std::vector<std::string> task_metric_names(TaskKind k) {
    switch (k) {
        case TaskKind::regression:
        case TaskKind::bounded_regression: return {"r2", "mae"};
        case TaskKind::classification: return {"f1", "accuracy"};
        case TaskKind::multiclass_seg: return {"accuracy", "iou"};
        case TaskKind::dense_seg: return {"mae"};
        case TaskKind::none: break;
    }
    fail(ErrorCode::config, "task kind has no metrics");
}

bool metric_higher_is_better(const std::string& metric) { return metric != "mae"; }

std::vector<SplitItem> split_items(const Dataset& data) {
    std::vector<SplitItem> items;
    items.reserve(data.size());
    for (size_t i = 0; i < data.size(); ++i)
        items.push_back({data.sample_ids[i], data.group_ids[i], data.strata[i]});
    return items;
}

RolePlan plan_roles(const Dataset& data, const ModalityRoleConfig& cfg) {
    require(!cfg.main_task.empty(), ErrorCode::config, "no main task configured");
    require(data.has(cfg.main_task), ErrorCode::config,
            "main task modality '" + cfg.main_task + "' is not in the dataset");
    require(cfg.role_of(cfg.main_task) == Role::target, ErrorCode::config,
            "main task modality '" + cfg.main_task + "' must have role target");

    std::set<std::string> seen;
    for (const auto& [name, role] : cfg.roles) {
        require(data.has(name), ErrorCode::config, "role for unknown modality '" + name + "'");
        require(seen.insert(name).second, ErrorCode::config,
                "modality '" + name + "' listed twice in role config");
        (void)role;
    }

    // Remote-sensing imagery never shifts role: it must be declared an input.
    for (const auto& col : data.columns)
        if (col.spec.imagery)
            require(cfg.role_of(col.spec.name) == Role::input, ErrorCode::config,
                    "imagery modality '" + col.spec.name + "' must be an input");

    RolePlan plan;
    plan.main_task = cfg.main_task;
    for (const auto& [name, role] : cfg.roles) {
        const auto& spec = data.column(name).spec;
        if (role == Role::input) {
            require(spec.kind != ModalityKind::class_map, ErrorCode::config,
                    "modality '" + name + "' is a class map and cannot be an input");
            plan.inputs.push_back(name);
        } else if (role == Role::target) {
            require(spec.target_kind != TaskKind::none, ErrorCode::config,
                    "modality '" + name + "' cannot be a prediction target");
            plan.tasks.push_back({name, spec.target_kind, 1.0, ""});
        }
    }
    require(!plan.inputs.empty(), ErrorCode::config, "role config declares no inputs");

    TaskKind main_kind = data.column(cfg.main_task).spec.target_kind;
    plan.spatial =
        main_kind == TaskKind::multiclass_seg || main_kind == TaskKind::dense_seg;
    if (plan.spatial) {
        bool any_map = false;
        for (const auto& name : plan.inputs) {
            auto k = data.column(name).spec.kind;
            any_map |= k == ModalityKind::image_spatial || k == ModalityKind::dense_map;
        }
        require(any_map, ErrorCode::config,
                "a map-valued main task needs at least one spatial input");
    } else {
        for (const auto& name : plan.inputs)
            require(data.column(name).spec.kind != ModalityKind::dense_map, ErrorCode::config,
                    "dense map '" + name + "' can only feed a map-valued model");
    }
    return plan;
}

std::vector<double> normalize_weights(const std::vector<double>& raw) {
    require(!raw.empty(), ErrorCode::config, "no weights to normalize");
    double sum = 0;
    for (double w : raw) {
        require(w > 0, ErrorCode::config, "task weights must be positive");
        sum += w;
    }
    std::vector<double> out(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / sum;
    return out;
}

RealTensor total_loss(const std::vector<RealTensor>& losses, const std::vector<double>& weights) {
    require(losses.size() == weights.size(), ErrorCode::config,
            "loss/weight count mismatch: " + std::to_string(losses.size()) + " vs " +
                std::to_string(weights.size()));
    RealTensor acc;
    for (size_t i = 0; i < losses.size(); ++i) {
        require(weights[i] >= 0, ErrorCode::config, "negative task weight");
        if (weights[i] == 0) continue; // excluded from the graph entirely
        auto term = mul_scalar(losses[i], real(weights[i]));
        acc = acc.defined() ? add(acc, term) : term;
    }
    require(acc.defined(), ErrorCode::config, "every task weight is zero");
    return acc;
}

const TaskSpec& MultitaskModel::task(const std::string& name) const {
    for (const auto& t : plan.tasks)
        if (t.name == name) return t;
    fail(ErrorCode::config, "no task named '" + name + "'");
}

MultitaskModel MultitaskModel::build(const Dataset& data, const RolePlan& plan, uint64_t seed) {
    MultitaskModel m;
    m.plan = plan;
    Rng rng = Rng::derive(seed, 0x6D6F64656C); // "model" stream

    // Latent widths: sequence/tabular/categorical latents are narrow, image
    // latents wide; spatial encoders emit 64-channel maps.
    size_t fused_channels = 0;
    m.fused_dim = 0;
    for (const auto& name : plan.inputs) {
        const auto& spec = data.column(name).spec;
        EncoderSlot slot;
        slot.modality = name;
        switch (spec.kind) {
            case ModalityKind::timeseries:
                slot.enc = TimeseriesEncoder(spec.features, 32, 4, 64, rng);
                m.fused_dim += 32;
                fused_channels += 32;
                break;
            case ModalityKind::tabular:
                slot.enc = TabularEncoder(spec.features, 64, 32, rng);
                m.fused_dim += 32;
                fused_channels += 32;
                break;
            case ModalityKind::categorical:
                slot.enc = CategoricalEncoder(spec.classes, 32, rng);
                m.fused_dim += 32;
                fused_channels += 32;
                break;
            case ModalityKind::image_spatial:
            case ModalityKind::dense_map:
                if (plan.spatial) {
                    slot.enc = UnetEncoder(spec.channels, rng);
                    slot.map_latent = true;
                    fused_channels += UnetEncoder::out_channels;
                } else {
                    slot.enc = CnnEncoder(spec.channels, 512, rng);
                    m.fused_dim += 512;
                }
                break;
            case ModalityKind::image_flat:
                slot.enc = FlatImageEncoder(spec.channels * spec.height * spec.width, 512, 0.3,
                                            rng);
                m.fused_dim += 512;
                fused_channels += 512;
                break;
            case ModalityKind::class_map:
                fail(ErrorCode::config, "class map cannot be an input");
        }
        m.encoders.push_back(std::move(slot));
    }
    if (plan.spatial) m.fusion = SpatialFusion(fused_channels, rng);

    for (const auto& t : plan.tasks) {
        const auto& spec = data.column(t.name).spec;
        size_t out_dim = task_uses_cross_entropy(t.kind) ? spec.classes : spec.features;
        Head head;
        if (plan.spatial) {
            switch (t.kind) {
                case TaskKind::multiclass_seg:
                    head = SegmentationHead(SpatialFusion::out_channels, spec.classes, rng);
                    break;
                case TaskKind::dense_seg:
                    head = DenseMapHead(SpatialFusion::out_channels, rng);
                    break;
                case TaskKind::classification:
                    head = MapVectorHead(SpatialFusion::out_channels, spec.classes, 0.5, false,
                                         rng);
                    break;
                case TaskKind::bounded_regression:
                    head = MapVectorHead(SpatialFusion::out_channels, spec.features, 0.2, true,
                                         rng);
                    break;
                case TaskKind::regression:
                    head = MapVectorHead(SpatialFusion::out_channels, spec.features, 0.2, false,
                                         rng);
                    break;
                case TaskKind::none: fail(ErrorCode::config, "task without a kind");
            }
        } else {
            require(t.kind != TaskKind::multiclass_seg && t.kind != TaskKind::dense_seg,
                    ErrorCode::config,
                    "task '" + t.name + "' predicts a map but the main task is vector-valued");
            std::string layout = t.head_layout.empty() ? "mlp_bn" : t.head_layout;
            if (layout == "linear")
                head = LinearHead(m.fused_dim, out_dim, rng);
            else if (layout == "mlp_bn")
                head = MlpBnHead(m.fused_dim, 64, out_dim, rng);
            else if (layout == "mlp_drop")
                head = MlpDropoutHead(m.fused_dim, 64, out_dim, 0.25, rng);
            else
                fail(ErrorCode::config, "unknown head layout '" + layout + "'");
        }
        m.heads.emplace_back(t.name, std::move(head));
    }

    for (auto& slot : m.encoders)
        std::visit([&](auto& e) { e.collect("enc." + slot.modality, m.params); }, slot.enc);
    if (plan.spatial) m.fusion.collect("fusion", m.params);
    for (auto& [name, head] : m.heads) head_collect(head, "head." + name, m.params);
    return m;
}

std::vector<std::pair<std::string, RealTensor>> MultitaskModel::forward(const Batch& batch,
                                                                        bool training, Rng& rng) {
    std::vector<RealTensor> vecs, maps;
    RealTensor fused;
    try {
        for (auto& slot : encoders) {
            const auto& name = slot.modality;
            auto latent = std::visit(
                overloaded{
                    [&](TimeseriesEncoder& e) {
                        return e.forward(batch.tensor(name), batch.timestamps(name),
                                         batch.lengths(name));
                    },
                    [&](TabularEncoder& e) { return e.forward(batch.tensor(name)); },
                    [&](CategoricalEncoder& e) { return e.forward(batch.class_ids(name)); },
                    [&](UnetEncoder& e) { return e.forward(batch.tensor(name)); },
                    [&](CnnEncoder& e) { return e.forward(batch.tensor(name)); },
                    [&](FlatImageEncoder& e) {
                        return e.forward(batch.tensor(name), training, rng);
                    },
                },
                slot.enc);
            (slot.map_latent ? maps : vecs).push_back(std::move(latent));
        }
        fused = plan.spatial ? fusion.forward(maps, vecs) : fuse_vectors(vecs);
    } catch (const Error& e) {
        fail(ErrorCode::train, std::string("shared encoders: ") + e.what());
    }

    std::vector<std::pair<std::string, RealTensor>> preds;
    for (size_t i = 0; i < plan.tasks.size(); ++i) {
        const auto& t = plan.tasks[i];
        try {
            auto y = head_forward(heads[i].second, fused, training, rng);
            if (t.kind == TaskKind::bounded_regression && !plan.spatial) y = sigmoid(y);
            preds.emplace_back(t.name, std::move(y));
        } catch (const Error& e) {
            fail(ErrorCode::train, "task '" + t.name + "': " + e.what());
        }
    }
    return preds;
}

std::vector<std::pair<std::string, RealTensor>> task_losses(
    MultitaskModel& model, const Batch& batch,
    const std::vector<std::pair<std::string, RealTensor>>& preds) {
    std::vector<std::pair<std::string, RealTensor>> losses;
    for (const auto& [name, pred] : preds) {
        const auto& t = model.task(name);
        try {
            RealTensor loss = task_uses_cross_entropy(t.kind)
                                  ? cross_entropy_loss(pred, batch.class_ids(name))
                                  : mse_loss(pred, batch.tensor(name));
            losses.emplace_back(name, std::move(loss));
        } catch (const Error& e) {
            fail(ErrorCode::train, "task '" + name + "': " + e.what());
        }
    }
    return losses;
}

namespace {

struct TaskAccumulator {
    std::vector<double> pred_values, target_values;
    std::vector<int> pred_classes, target_classes;
};

// Appends this batch's predictions to the log and the metric accumulators.
void record_task_batch(const Dataset& data, const Batch& batch, const TaskSpec& t,
                       const ModalitySpec& spec, const RealTensor& pred, int epoch,
                       TaskAccumulator& acc, std::vector<PredRow>& rows) {
    size_t B = batch.count;
    const auto& pv = pred.data();
    for (size_t b = 0; b < B; ++b) {
        PredRow row;
        row.epoch = epoch;
        row.sample_id = data.sample_ids[batch.idx[b]];
        row.group_id = data.group_ids[batch.idx[b]];
        row.task = t.name;
        switch (t.kind) {
            case TaskKind::regression:
            case TaskKind::bounded_regression: {
                size_t F = spec.features;
                const auto& tv = batch.tensor(t.name).data();
                row.pred = payload_regression(&pv[b * F], F);
                row.target = payload_regression(&tv[b * F], F);
                for (size_t f = 0; f < F; ++f) {
                    acc.pred_values.push_back(double(pv[b * F + f]));
                    acc.target_values.push_back(double(tv[b * F + f]));
                }
                break;
            }
            case TaskKind::classification: {
                size_t K = spec.classes;
                size_t best = 0, second = 1;
                for (size_t k = 1; k < K; ++k)
                    if (pv[b * K + k] > pv[b * K + best]) best = k;
                if (best == second) second = 0;
                for (size_t k = 0; k < K; ++k)
                    if (k != best && pv[b * K + k] > pv[b * K + second]) second = k;
                double margin = K > 1 ? double(pv[b * K + best]) - double(pv[b * K + second]) : 0;
                int target = batch.class_ids(t.name)[b];
                row.pred = payload_class(int(best), margin);
                row.target = payload_class(target);
                acc.pred_classes.push_back(int(best));
                acc.target_classes.push_back(target);
                break;
            }
            case TaskKind::multiclass_seg: {
                size_t K = spec.classes, HW = spec.height * spec.width;
                std::vector<int> cls(HW);
                for (size_t p = 0; p < HW; ++p) {
                    size_t best = 0;
                    for (size_t k = 1; k < K; ++k)
                        if (pv[(b * K + k) * HW + p] > pv[(b * K + best) * HW + p]) best = k;
                    cls[p] = int(best);
                }
                const int* target = &batch.class_ids(t.name)[b * HW];
                row.pred = payload_class_map(cls.data(), spec.height, spec.width);
                row.target = payload_class_map(target, spec.height, spec.width);
                acc.pred_classes.insert(acc.pred_classes.end(), cls.begin(), cls.end());
                acc.target_classes.insert(acc.target_classes.end(), target, target + HW);
                break;
            }
            case TaskKind::dense_seg: {
                size_t HW = spec.height * spec.width;
                const auto& tv = batch.tensor(t.name).data();
                row.pred = payload_dense_map(&pv[b * HW], spec.height, spec.width);
                row.target = payload_dense_map(&tv[b * HW], spec.height, spec.width);
                for (size_t p = 0; p < HW; ++p) {
                    acc.pred_values.push_back(double(pv[b * HW + p]));
                    acc.target_values.push_back(double(tv[b * HW + p]));
                }
                break;
            }
            case TaskKind::none: fail(ErrorCode::config, "task without a kind");
        }
        rows.push_back(std::move(row));
    }
}

std::vector<std::string> needed_modalities(const RolePlan& plan) {
    std::vector<std::string> out = plan.inputs;
    for (const auto& t : plan.tasks)
        if (std::find(out.begin(), out.end(), t.name) == out.end()) out.push_back(t.name);
    return out;
}

std::unordered_map<int64_t, size_t> index_by_id(const Dataset& data) {
    std::unordered_map<int64_t, size_t> map;
    map.reserve(data.size());
    for (size_t i = 0; i < data.size(); ++i) map[data.sample_ids[i]] = i;
    return map;
}

} // namespace

EvalResult evaluate(MultitaskModel& model, const Dataset& data,
                    const std::vector<int64_t>& sample_ids, const std::string& split_label,
                    int epoch, size_t batch_size) {
    require(!sample_ids.empty(), ErrorCode::train, "empty evaluation split");
    require(batch_size >= 1, ErrorCode::config, "batch size must be >= 1");
    auto by_id = index_by_id(data);
    std::vector<size_t> indices;
    for (int64_t id : sample_ids) {
        auto it = by_id.find(id);
        require(it != by_id.end(), ErrorCode::data,
                "sample id " + std::to_string(id) + " not in dataset");
        indices.push_back(it->second);
    }

    auto modalities = needed_modalities(model.plan);
    std::vector<TaskAccumulator> accs(model.plan.tasks.size());
    EvalResult out;
    Rng eval_rng(0); // eval mode never draws from it

    for (size_t start = 0; start < indices.size(); start += batch_size) {
        size_t n = std::min(batch_size, indices.size() - start);
        std::vector<size_t> chunk(indices.begin() + long(start),
                                  indices.begin() + long(start + n));
        Batch batch = make_batch(data, chunk, modalities);
        auto preds = model.forward(batch, false, eval_rng);
        for (size_t ti = 0; ti < model.plan.tasks.size(); ++ti) {
            const auto& t = model.plan.tasks[ti];
            record_task_batch(data, batch, t, data.column(t.name).spec, preds[ti].second, epoch,
                              accs[ti], out.log_rows);
        }
    }

    for (size_t ti = 0; ti < model.plan.tasks.size(); ++ti) {
        const auto& t = model.plan.tasks[ti];
        const auto& spec = data.column(t.name).spec;
        const auto& acc = accs[ti];
        for (const auto& metric : task_metric_names(t.kind)) {
            double v = 0;
            if (metric == "r2")
                v = metric_r_squared(acc.pred_values, acc.target_values);
            else if (metric == "mae")
                v = metric_mae(acc.pred_values, acc.target_values);
            else if (metric == "f1")
                v = metric_micro_f1(acc.pred_classes, acc.target_classes, int(spec.classes));
            else if (metric == "accuracy")
                v = metric_accuracy(acc.pred_classes, acc.target_classes, int(spec.classes));
            else if (metric == "iou")
                v = metric_mean_iou(acc.pred_classes, acc.target_classes, int(spec.classes));
            out.metrics.push_back({epoch, split_label, t.name, metric, v});
        }
    }
    return out;
}

namespace {

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    f << "epoch,split,task,metric,value\n";
    for (const auto& r : rows)
        f << r.epoch << ',' << r.split << ',' << r.task << ',' << r.metric << ','
          << fmt_g9(r.value) << '\n';
    require(f.good(), ErrorCode::io, "write failed for '" + path + "'");
}

void write_splits_csv(const std::string& path, const Dataset& data,
                      const SplitAssignment& split) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    f << "sample_id,group_id,stratum,split\n";
    for (size_t i = 0; i < data.size(); ++i) {
        auto it = split.by_sample.find(data.sample_ids[i]);
        require(it != split.by_sample.end(), ErrorCode::data,
                "sample " + std::to_string(data.sample_ids[i]) + " missing from split");
        f << data.sample_ids[i] << ',' << data.group_ids[i] << ',' << data.strata[i] << ','
          << split_name(it->second) << '\n';
    }
    require(f.good(), ErrorCode::io, "write failed for '" + path + "'");
}

// Wall-clock facts live only here so every other artifact stays reproducible.
void write_run_info(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    f << "finished_at=" << buf << "\n";
}

double main_task_metric(const std::vector<MetricRow>& rows, const std::string& split,
                        const std::string& task, const std::string& metric, int epoch) {
    for (const auto& r : rows)
        if (r.epoch == epoch && r.split == split && r.task == task && r.metric == metric)
            return r.value;
    fail(ErrorCode::train, "missing metric " + metric + " for task " + task);
}

} // namespace

TrainResult train(MultitaskModel& model, const Dataset& data, const SplitAssignment& split,
                  const TrainConfig& cfg) {
    require(!cfg.out_dir.empty(), ErrorCode::config, "train: no output directory");
    require(cfg.epochs >= 1, ErrorCode::config, "train: epochs must be >= 1");
    require(cfg.batch_size >= 2, ErrorCode::config, "train: batch size must be >= 2");
    for (auto s : {Split::train, Split::val, Split::test})
        require(!split.of(s).empty(), ErrorCode::train,
                std::string("empty split: ") + split_name(s));

    std::filesystem::create_directories(cfg.out_dir);
    auto path = [&](const char* name) {
        return (std::filesystem::path(cfg.out_dir) / name).string();
    };

    auto by_id = index_by_id(data);
    std::vector<size_t> train_idx;
    for (int64_t id : split.of(Split::train)) {
        auto it = by_id.find(id);
        require(it != by_id.end(), ErrorCode::data, "train split sample not in dataset");
        train_idx.push_back(it->second);
    }

    // Loss weights: normalized over the positive entries; zero-weight tasks
    // keep weight zero and stay out of the gradient flow but are still
    // evaluated and logged.
    std::vector<double> weights(model.plan.tasks.size(), 0.0);
    {
        std::vector<double> positive;
        for (const auto& t : model.plan.tasks) {
            require(t.raw_weight >= 0, ErrorCode::config,
                    "task '" + t.name + "' has a negative weight");
            if (t.name == model.plan.main_task)
                require(t.raw_weight > 0, ErrorCode::config, "main task weight must be positive");
            if (t.raw_weight > 0) positive.push_back(t.raw_weight);
        }
        auto norm = normalize_weights(positive);
        size_t j = 0;
        for (size_t i = 0; i < model.plan.tasks.size(); ++i)
            if (model.plan.tasks[i].raw_weight > 0) weights[i] = norm[j++];
    }

    // Optional inverse-class-frequency sampling, keyed to one classification
    // task's training labels.
    std::vector<double> sample_weight;
    if (!cfg.weight_by_task.empty()) {
        const auto& t = model.task(cfg.weight_by_task);
        require(t.kind == TaskKind::classification, ErrorCode::config,
                "weighted sampling needs a classification task, got '" + cfg.weight_by_task +
                    "'");
        const auto& col = data.column(cfg.weight_by_task);
        std::vector<size_t> counts(col.spec.classes, 0);
        for (size_t i : train_idx) ++counts[size_t(col.ids[i])];
        sample_weight.resize(train_idx.size());
        for (size_t r = 0; r < train_idx.size(); ++r) {
            size_t c = counts[size_t(col.ids[train_idx[r]])];
            sample_weight[r] = c > 0 ? 1.0 / double(c) : 0.0;
        }
    }

    auto modalities = needed_modalities(model.plan);
    auto params = param_tensors(model.params);
    AdamState<real> opt;

    TrainResult result;
    std::vector<PredRow> log_rows;
    const auto& main_spec = model.task(model.plan.main_task);
    std::string best_metric = task_metric_names(main_spec.kind)[0];
    bool best_higher = metric_higher_is_better(best_metric);
    result.best_metric_name = best_metric;

    auto run_eval = [&](int epoch) {
        for (auto s : {Split::val, Split::test}) {
            auto ev = evaluate(model, data, split.of(s), split_name(s), epoch, cfg.batch_size);
            result.metrics.insert(result.metrics.end(), ev.metrics.begin(), ev.metrics.end());
            log_rows.insert(log_rows.end(), ev.log_rows.begin(), ev.log_rows.end());
        }
    };

    std::vector<std::vector<real>> best_snapshot;
    bool have_best = false;

    // Epochs are logged after their pass, 0-indexed: epoch 0 is the state
    // after the first optimization pass, matching how analysis anchors read
    // the log.
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::derive(cfg.seed, 0x65706F0000ull + uint64_t(epoch));
        Rng drop_rng = Rng::derive(cfg.seed, 0x64726F0000ull + uint64_t(epoch));

        std::vector<size_t> order;
        if (sample_weight.empty()) {
            order = train_idx;
            shuffle_rng.shuffle(order);
        } else {
            // With-replacement draws against the cumulative weight profile.
            std::vector<double> cum(sample_weight.size());
            double total = 0;
            for (size_t i = 0; i < sample_weight.size(); ++i) {
                total += sample_weight[i];
                cum[i] = total;
            }
            require(total > 0, ErrorCode::config, "weighted sampling has zero total weight");
            order.resize(train_idx.size());
            for (auto& slot : order) {
                double u = shuffle_rng.uniform() * total;
                size_t lo = size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
                slot = train_idx[std::min(lo, train_idx.size() - 1)];
            }
        }

        std::vector<double> loss_sums(model.plan.tasks.size(), 0.0);
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t n = std::min(cfg.batch_size, order.size() - start);
            if (n < 2) break; // batch statistics need two samples
            std::vector<size_t> chunk(order.begin() + long(start), order.begin() + long(start + n));
            Batch batch = make_batch(data, chunk, modalities);
            auto preds = model.forward(batch, true, drop_rng);
            auto losses = task_losses(model, batch, preds);
            std::vector<RealTensor> loss_tensors;
            for (size_t i = 0; i < losses.size(); ++i) {
                loss_tensors.push_back(losses[i].second);
                loss_sums[i] += double(losses[i].second.item()) * double(n);
            }
            auto loss = total_loss(loss_tensors, weights);
            backward(loss);
            optimizer_step(params, opt, real(cfg.lr));
            seen += n;
        }
        require(seen > 0, ErrorCode::train, "no trainable batches (training split too small)");

        for (size_t i = 0; i < model.plan.tasks.size(); ++i)
            result.metrics.push_back(
                {epoch, "train", model.plan.tasks[i].name, "loss", loss_sums[i] / double(seen)});

        run_eval(epoch);

        double v = main_task_metric(result.metrics, "val", model.plan.main_task, best_metric,
                                    epoch);
        bool better = !have_best ||
                      (best_higher ? v > result.best_val_metric : v < result.best_val_metric);
        if (better) {
            have_best = true;
            result.best_epoch = epoch;
            result.best_val_metric = v;
            best_snapshot = snapshot_values(model.params);
        }
    }

    write_metrics_csv(path("metrics.csv"), result.metrics);
    PredictionLog log;
    log.rows = std::move(log_rows);
    log.save(path("predictions.csv"));
    write_splits_csv(path("splits.csv"), data, split);
    write_run_info(path("run_info.txt"));

    save_checkpoint(path("checkpoint_final.bin"), model.params);
    // The model is left holding its best-epoch weights.
    restore_values(model.params, best_snapshot);
    save_checkpoint(path("checkpoint_best.bin"), model.params);
    return result;
}

} // namespace mtx

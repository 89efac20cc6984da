// SPDX-License-Identifier: Apache-2.0
#include "mtx/xai.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "mtx/error.hpp"
#include "mtx/rng.hpp"

namespace mtx {
namespace {

using nlohmann::json;

std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot open " + path + " for writing");
    out << text;
    require(out.good(), ErrorCode::io, "failed writing " + path);
}

void write_json(const json& j, const std::string& path) { write_text(path, j.dump(2) + "\n"); }

// epoch -> sample -> log row, for one task. Epochs ascending.
struct TaskView {
    std::vector<int> epochs;
    std::map<int, std::unordered_map<int64_t, const PredRow*>> rows;

    const PredRow& at(int epoch, int64_t sample, const std::string& task) const {
        auto e = rows.find(epoch);
        require(e != rows.end(), ErrorCode::analyze,
                "task '" + task + "' has no rows at epoch " + std::to_string(epoch));
        auto s = e->second.find(sample);
        require(s != e->second.end(), ErrorCode::analyze,
                "task '" + task + "' is missing sample " + std::to_string(sample) + " at epoch " +
                    std::to_string(epoch));
        return *s->second;
    }
};

TaskView view_task(const PredictionLog& log, const std::string& task) {
    TaskView v;
    for (const auto& r : log.rows)
        if (r.task == task) v.rows[r.epoch][r.sample_id] = &r;
    require(!v.rows.empty(), ErrorCode::analyze, "task '" + task + "' does not appear in the log");
    for (const auto& [e, _] : v.rows) v.epochs.push_back(e);
    return v;
}

// Samples of one epoch map, ascending for deterministic iteration.
std::vector<int64_t> epoch_samples(const std::unordered_map<int64_t, const PredRow*>& m,
                                   const std::vector<int64_t>& filter) {
    std::vector<int64_t> ids;
    if (filter.empty()) {
        ids.reserve(m.size());
        for (const auto& [sid, _] : m) ids.push_back(sid);
        std::sort(ids.begin(), ids.end());
    } else {
        ids = filter;
        std::sort(ids.begin(), ids.end());
    }
    return ids;
}

bool class_correct(const PredRow& row, const std::string& task) {
    auto pred = parse_payload(row.pred);
    auto target = parse_payload(row.target);
    require(pred.kind == PayloadKind::classification && target.kind == PayloadKind::classification,
            ErrorCode::analyze, "combo analysis requires classification payloads for task '" +
                                    task + "'");
    return pred.ids[0] == target.ids[0];
}

size_t combo_index(Combo c) { return size_t(c); }

} // namespace

double relative_error(double pred, double target) {
    return std::abs(pred - target) / std::max(std::abs(target), 1e-6);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), ErrorCode::analyze, "correlation inputs differ in length");
    require(x.size() >= 3, ErrorCode::analyze, "correlation needs at least 3 points");
    const size_t n = x.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0 && syy > 0, ErrorCode::analyze, "undefined correlation: constant sequence");
    return sxy / std::sqrt(sxx * syy);
}

double pearson_pvalue(const std::vector<double>& x, const std::vector<double>& y,
                      size_t permutations, uint64_t seed) {
    require(permutations >= 1, ErrorCode::analyze, "p-value needs at least one permutation");
    double observed = std::abs(pearson(x, y));

    const size_t n = x.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    std::vector<double> xc(n), yc(n);
    double sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        xc[i] = x[i] - mx;
        yc[i] = y[i] - my;
        sxx += xc[i] * xc[i];
        syy += yc[i] * yc[i];
    }
    double denom = std::sqrt(sxx * syy);

    auto rng = Rng::derive(seed, 0x7065726d75746531ull);
    size_t hits = 0;
    for (size_t k = 0; k < permutations; ++k) {
        for (size_t i = n - 1; i > 0; --i) {
            size_t j = size_t(rng.below(i + 1));
            std::swap(yc[i], yc[j]);
        }
        double dot = 0;
        for (size_t i = 0; i < n; ++i) dot += xc[i] * yc[i];
        if (std::abs(dot / denom) >= observed) ++hits;
    }
    return double(1 + hits) / double(permutations + 1);
}

double payload_error(const Payload& pred, const Payload& target) {
    require(pred.kind == target.kind, ErrorCode::analyze,
            "prediction and target payload kinds differ");
    switch (pred.kind) {
        case PayloadKind::regression: {
            require(pred.values.size() == target.values.size(), ErrorCode::analyze,
                    "regression payload widths differ");
            double sum = 0;
            for (size_t i = 0; i < pred.values.size(); ++i)
                sum += relative_error(pred.values[i], target.values[i]);
            return sum / double(pred.values.size());
        }
        case PayloadKind::classification:
            return pred.ids[0] == target.ids[0] ? 0.0 : 1.0;
        case PayloadKind::class_map: {
            require(pred.ids.size() == target.ids.size(), ErrorCode::analyze,
                    "class map payload sizes differ");
            size_t wrong = 0;
            for (size_t i = 0; i < pred.ids.size(); ++i) wrong += pred.ids[i] != target.ids[i];
            return double(wrong) / double(pred.ids.size());
        }
        case PayloadKind::dense_map: {
            require(pred.values.size() == target.values.size(), ErrorCode::analyze,
                    "dense map payload sizes differ");
            double sum = 0;
            for (size_t i = 0; i < pred.values.size(); ++i)
                sum += std::abs(pred.values[i] - target.values[i]);
            return sum / double(pred.values.size());
        }
    }
    fail(ErrorCode::analyze, "unknown payload kind");
}

std::vector<ErrorRecord> error_records(const PredictionLog& log) {
    std::vector<ErrorRecord> out;
    out.reserve(log.rows.size());
    for (const auto& r : log.rows)
        out.push_back({r.epoch, r.sample_id, r.group_id, r.task,
                       payload_error(parse_payload(r.pred), parse_payload(r.target))});
    return out;
}

// ---------------------------------------------------------- correlation ----

CorrelationReport correlation_over_epochs(const PredictionLog& log, const std::string& main_task,
                                          const std::vector<std::string>& aux_tasks,
                                          const std::vector<int64_t>& eval_pool,
                                          const CorrelationConfig& cfg) {
    require(!aux_tasks.empty(), ErrorCode::analyze, "no auxiliary tasks requested");
    require(cfg.subset_fraction > 0 && cfg.subset_fraction <= 1, ErrorCode::analyze,
            "subset fraction must be in (0, 1]");
    auto main_view = view_task(log, main_task);
    std::vector<TaskView> aux_views;
    for (const auto& t : aux_tasks) aux_views.push_back(view_task(log, t));

    CorrelationReport report;
    report.main_task = main_task;

    std::vector<int64_t> pool(eval_pool);
    std::sort(pool.begin(), pool.end());
    require(pool.size() >= cfg.min_subset, ErrorCode::analyze,
            "eval pool smaller than the minimum correlation subset");
    size_t k = size_t(std::lround(cfg.subset_fraction * double(pool.size())));
    k = std::clamp(k, cfg.min_subset, pool.size());
    auto rng = Rng::derive(cfg.seed, 0x636f7272656c3031ull);
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + size_t(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    report.subset.assign(pool.begin(), pool.begin() + k);
    std::sort(report.subset.begin(), report.subset.end());

    for (int epoch : main_view.epochs) {
        std::vector<double> main_err;
        main_err.reserve(k);
        for (int64_t sid : report.subset) {
            const auto& row = main_view.at(epoch, sid, main_task);
            main_err.push_back(payload_error(parse_payload(row.pred), parse_payload(row.target)));
        }
        for (size_t a = 0; a < aux_tasks.size(); ++a) {
            std::vector<double> aux_err;
            aux_err.reserve(k);
            for (int64_t sid : report.subset) {
                const auto& row = aux_views[a].at(epoch, sid, aux_tasks[a]);
                aux_err.push_back(
                    payload_error(parse_payload(row.pred), parse_payload(row.target)));
            }
            CorrelationRow out;
            out.epoch = epoch;
            out.aux_task = aux_tasks[a];
            out.n = k;
            try {
                out.r = pearson(main_err, aux_err);
                uint64_t row_seed = cfg.seed ^ (uint64_t(uint32_t(epoch)) << 20) ^ uint64_t(a);
                out.p = pearson_pvalue(main_err, aux_err, cfg.permutations, row_seed);
                out.defined = true;
            } catch (const Error& e) {
                out.defined = false;
                out.note = e.what();
            }
            report.rows.push_back(std::move(out));
        }
    }
    return report;
}

// --------------------------------------------------------------- combos ----

const char* combo_name(Combo c) {
    switch (c) {
        case Combo::CC: return "CC";
        case Combo::CF: return "CF";
        case Combo::FC: return "FC";
        case Combo::FF: return "FF";
    }
    return "?";
}

Combo combo_classify(bool aux_correct, bool main_correct) {
    if (aux_correct) return main_correct ? Combo::CC : Combo::CF;
    return main_correct ? Combo::FC : Combo::FF;
}

ComboTimeline combo_timeline(const PredictionLog& log, const std::string& aux_task,
                             const std::string& main_task, const std::vector<int64_t>& samples) {
    auto aux_view = view_task(log, aux_task);
    auto main_view = view_task(log, main_task);

    ComboTimeline tl;
    tl.aux_task = aux_task;
    tl.main_task = main_task;
    for (int epoch : main_view.epochs) {
        auto ids = epoch_samples(main_view.rows.at(epoch), samples);
        std::array<size_t, 4> counts{};
        for (int64_t sid : ids) {
            bool aux_ok = class_correct(aux_view.at(epoch, sid, aux_task), aux_task);
            bool main_ok = class_correct(main_view.at(epoch, sid, main_task), main_task);
            counts[combo_index(combo_classify(aux_ok, main_ok))] += 1;
        }
        tl.epochs.push_back(epoch);
        tl.counts.push_back(counts);
    }
    return tl;
}

TransitionReport transition_tracking(const PredictionLog& log, const std::string& aux_task,
                                     const std::string& main_task, int anchor_epoch, Combo anchor,
                                     const std::vector<int64_t>& samples) {
    auto aux_view = view_task(log, aux_task);
    auto main_view = view_task(log, main_task);
    require(main_view.rows.count(anchor_epoch) != 0, ErrorCode::analyze,
            "anchor epoch " + std::to_string(anchor_epoch) + " is not in the log");

    TransitionReport report;
    report.anchor_epoch = anchor_epoch;
    report.anchor = anchor;
    for (int64_t sid : epoch_samples(main_view.rows.at(anchor_epoch), samples)) {
        bool aux_ok = class_correct(aux_view.at(anchor_epoch, sid, aux_task), aux_task);
        bool main_ok = class_correct(main_view.at(anchor_epoch, sid, main_task), main_task);
        if (combo_classify(aux_ok, main_ok) == anchor) report.anchor_samples.push_back(sid);
    }
    if (report.anchor_samples.empty()) return report;  // explicit empty report

    for (int epoch : main_view.epochs) {
        if (epoch < anchor_epoch) continue;
        std::array<double, 4> ratio{};
        for (int64_t sid : report.anchor_samples) {
            bool aux_ok = class_correct(aux_view.at(epoch, sid, aux_task), aux_task);
            bool main_ok = class_correct(main_view.at(epoch, sid, main_task), main_task);
            ratio[combo_index(combo_classify(aux_ok, main_ok))] += 1;
        }
        for (auto& v : ratio) v /= double(report.anchor_samples.size());
        report.epochs.push_back(epoch);
        report.ratios.push_back(ratio);
    }
    return report;
}

// ------------------------------------------------------------ hierarchy ----

HierarchyReport hierarchy_adherence(const PredictionLog& log, const std::vector<int>& parent_map,
                                    const std::string& parent_task, const std::string& child_task,
                                    const std::vector<int64_t>& samples) {
    require(!parent_map.empty(), ErrorCode::analyze, "parent map is empty");
    for (int p : parent_map)
        require(p >= 0, ErrorCode::analyze, "parent map contains a negative parent");
    auto parent_of = [&](int child, const char* what) {
        require(child >= 0 && size_t(child) < parent_map.size(), ErrorCode::analyze,
                std::string(what) + " class " + std::to_string(child) +
                    " is missing from the parent map");
        return parent_map[size_t(child)];
    };

    auto par_view = view_task(log, parent_task);
    auto child_view = view_task(log, child_task);

    HierarchyReport report;
    for (int epoch : child_view.epochs) {
        HierarchyCounts c;
        for (int64_t sid : epoch_samples(child_view.rows.at(epoch), samples)) {
            const auto& crow = child_view.at(epoch, sid, child_task);
            const auto& prow = par_view.at(epoch, sid, parent_task);
            auto cp = parse_payload(crow.pred), ct = parse_payload(crow.target);
            auto pp = parse_payload(prow.pred), pt = parse_payload(prow.target);
            require(cp.kind == PayloadKind::classification &&
                        pp.kind == PayloadKind::classification,
                    ErrorCode::analyze, "hierarchy analysis requires classification payloads");
            require(parent_of(ct.ids[0], "target child") == pt.ids[0], ErrorCode::analyze,
                    "log targets violate the parent map at sample " + std::to_string(sid));

            bool child_ok = cp.ids[0] == ct.ids[0];
            bool parent_ok = pp.ids[0] == pt.ids[0];
            bool in = parent_of(cp.ids[0], "predicted child") == pp.ids[0];
            switch (combo_classify(parent_ok, child_ok)) {
                case Combo::CC:
                    require(in, ErrorCode::analyze, "hierarchy invariant violated: CC must be -in");
                    c.cc_in += 1;
                    break;
                case Combo::CF: (in ? c.cf_in : c.cf_out) += 1; break;
                case Combo::FC:
                    require(!in, ErrorCode::analyze,
                            "hierarchy invariant violated: FC must be -out");
                    c.fc_out += 1;
                    break;
                case Combo::FF: (in ? c.ff_in : c.ff_out) += 1; break;
            }
        }
        report.epochs.push_back(epoch);
        report.counts.push_back(c);
    }
    return report;
}

// ------------------------------------------------- per-combo regression ----

ComboMetricReport metric_by_combo(const PredictionLog& log, const std::string& value_task,
                                  const std::string& aux_task, const std::string& main_task,
                                  const std::vector<int64_t>& samples) {
    auto value_view = view_task(log, value_task);
    auto aux_view = view_task(log, aux_task);
    auto main_view = view_task(log, main_task);

    ComboMetricReport report;
    report.value_task = value_task;
    for (int epoch : main_view.epochs) {
        ComboMetricRow row;
        row.epoch = epoch;
        std::array<double, 4> sum{};
        for (int64_t sid : epoch_samples(main_view.rows.at(epoch), samples)) {
            bool aux_ok = class_correct(aux_view.at(epoch, sid, aux_task), aux_task);
            bool main_ok = class_correct(main_view.at(epoch, sid, main_task), main_task);
            size_t cell = combo_index(combo_classify(aux_ok, main_ok));

            const auto& vrow = value_view.at(epoch, sid, value_task);
            auto vp = parse_payload(vrow.pred), vt = parse_payload(vrow.target);
            require(vp.kind == PayloadKind::regression, ErrorCode::analyze,
                    "per-combo metric requires a regression task, got task '" + value_task + "'");
            require(vp.values.size() == vt.values.size(), ErrorCode::analyze,
                    "regression payload widths differ");
            double mae = 0;
            for (size_t i = 0; i < vp.values.size(); ++i)
                mae += std::abs(vp.values[i] - vt.values[i]);
            mae /= double(vp.values.size());

            sum[cell] += mae;
            row.count[cell] += 1;
        }
        for (size_t cell = 0; cell < 4; ++cell)
            if (row.count[cell] > 0) row.mean[cell] = sum[cell] / double(row.count[cell]);
        report.rows.push_back(row);
    }
    return report;
}

// ----------------------------------------------------------- per group ----

std::vector<GroupRow> per_group_aggregate(
    const PredictionLog& log, const std::string& main_task, const std::string& aux_task,
    const std::unordered_map<int64_t, std::string>& split_of_sample) {
    auto main_view = view_task(log, main_task);
    auto aux_view = view_task(log, aux_task);

    std::vector<GroupRow> rows;
    for (int epoch : main_view.epochs) {
        // group -> (error sum, correct count, n, split)
        std::map<int64_t, GroupRow> groups;
        for (int64_t sid : epoch_samples(main_view.rows.at(epoch), {})) {
            const auto& mrow = main_view.at(epoch, sid, main_task);
            const auto& arow = aux_view.at(epoch, sid, aux_task);
            auto& g = groups[mrow.group_id];
            if (g.n == 0) {
                g.epoch = epoch;
                g.group_id = mrow.group_id;
                auto it = split_of_sample.find(sid);
                g.split = it == split_of_sample.end() ? "all" : it->second;
            }
            g.main_error += payload_error(parse_payload(mrow.pred), parse_payload(mrow.target));
            g.aux_accuracy += class_correct(arow, aux_task) ? 1.0 : 0.0;
            g.n += 1;
        }
        for (auto& [gid, g] : groups) {
            g.main_error /= double(g.n);
            g.aux_accuracy /= double(g.n);
            rows.push_back(g);
        }
    }
    return rows;
}

// ------------------------------------------------------------ map export ----

namespace {

constexpr unsigned char kPalette[16][3] = {
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
    {245, 130, 48},  {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
    {210, 245, 60},  {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},    {170, 255, 195}};

void write_ppm(const std::string& path, const std::vector<int>& ids, size_t h, size_t w) {
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + ids.size() * 3);
    for (int id : ids) {
        const auto& c = kPalette[size_t(id) % 16];
        out.push_back(char(c[0]));
        out.push_back(char(c[1]));
        out.push_back(char(c[2]));
    }
    write_text(path, out);
}

void write_pgm(const std::string& path, const std::vector<double>& v, size_t h, size_t w) {
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + v.size());
    for (double x : v)
        out.push_back(char(int(std::lround(std::clamp(x, 0.0, 1.0) * 255.0))));
    write_text(path, out);
}

} // namespace

ErrorMapBundle error_map_export(const PredictionLog& log, int64_t sample_id, int epoch,
                                const std::string& out_dir) {
    ErrorMapBundle bundle;
    bool sample_seen = false;
    for (const auto& r : log.rows) {
        if (r.sample_id != sample_id || r.epoch != epoch) continue;
        sample_seen = true;
        auto pred = parse_payload(r.pred);
        auto target = parse_payload(r.target);
        if (pred.kind == PayloadKind::class_map) {
            require(pred.ids.size() == target.ids.size(), ErrorCode::analyze,
                    "class map payload sizes differ");
            SegMaps m;
            m.task = r.task;
            m.h = pred.h;
            m.w = pred.w;
            m.target = target.ids;
            m.pred = pred.ids;
            m.mask.resize(pred.ids.size());
            for (size_t i = 0; i < pred.ids.size(); ++i)
                m.mask[i] = pred.ids[i] != target.ids[i] ? 1.0 : 0.0;
            bundle.seg.push_back(std::move(m));
        } else if (pred.kind == PayloadKind::dense_map) {
            require(pred.values.size() == target.values.size(), ErrorCode::analyze,
                    "dense map payload sizes differ");
            DenseMaps m;
            m.task = r.task;
            m.h = pred.h;
            m.w = pred.w;
            m.target = target.values;
            m.pred = pred.values;
            m.abs_error.resize(pred.values.size());
            for (size_t i = 0; i < pred.values.size(); ++i)
                m.abs_error[i] = std::abs(pred.values[i] - target.values[i]);
            bundle.dense.push_back(std::move(m));
        }
    }
    require(sample_seen, ErrorCode::analyze,
            "sample " + std::to_string(sample_id) + " is not logged at epoch " +
                std::to_string(epoch));
    require(!bundle.seg.empty() || !bundle.dense.empty(), ErrorCode::analyze,
            "sample " + std::to_string(sample_id) + " has no map tasks to export");

    std::filesystem::create_directories(out_dir);
    auto path = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    json legend;
    legend["sample_id"] = sample_id;
    legend["epoch"] = epoch;
    legend["seg"] = json::array();
    legend["dense"] = json::array();
    for (const auto& m : bundle.seg) {
        auto target_f = path(m.task + "_target.ppm");
        auto pred_f = path(m.task + "_pred.ppm");
        auto mask_f = path(m.task + "_mask.pgm");
        write_ppm(target_f, m.target, m.h, m.w);
        write_ppm(pred_f, m.pred, m.h, m.w);
        write_pgm(mask_f, m.mask, m.h, m.w);
        bundle.files.insert(bundle.files.end(), {target_f, pred_f, mask_f});

        int classes = 0;
        for (int id : m.target) classes = std::max(classes, id + 1);
        for (int id : m.pred) classes = std::max(classes, id + 1);
        json entry;
        entry["task"] = m.task;
        entry["classes"] = classes;
        json palette = json::array();
        for (int k = 0; k < classes; ++k)
            palette.push_back({kPalette[size_t(k) % 16][0], kPalette[size_t(k) % 16][1],
                               kPalette[size_t(k) % 16][2]});
        entry["palette"] = palette;
        entry["files"] = {{"target", m.task + "_target.ppm"},
                          {"pred", m.task + "_pred.ppm"},
                          {"mask", m.task + "_mask.pgm"}};
        legend["seg"].push_back(entry);
    }
    for (const auto& m : bundle.dense) {
        auto target_f = path(m.task + "_target.pgm");
        auto pred_f = path(m.task + "_pred.pgm");
        auto err_f = path(m.task + "_abs_error.pgm");
        write_pgm(target_f, m.target, m.h, m.w);
        write_pgm(pred_f, m.pred, m.h, m.w);
        write_pgm(err_f, m.abs_error, m.h, m.w);
        bundle.files.insert(bundle.files.end(), {target_f, pred_f, err_f});

        json entry;
        entry["task"] = m.task;
        entry["scale"] = {0.0, 1.0};
        entry["files"] = {{"target", m.task + "_target.pgm"},
                          {"pred", m.task + "_pred.pgm"},
                          {"abs_error", m.task + "_abs_error.pgm"}};
        legend["dense"].push_back(entry);
    }
    auto legend_f = path("legend.json");
    write_json(legend, legend_f);
    bundle.files.push_back(legend_f);
    return bundle;
}

// -------------------------------------------------------------- writers ----

void save_csv(const CorrelationReport& r, const std::string& path) {
    std::string out = "epoch,aux_task,r,p,n,defined\n";
    for (const auto& row : r.rows) {
        out += std::to_string(row.epoch) + "," + row.aux_task + ",";
        if (row.defined) out += fmt_g9(row.r) + "," + fmt_g9(row.p);
        else out += ",";
        out += "," + std::to_string(row.n) + "," + (row.defined ? "1" : "0") + "\n";
    }
    write_text(path, out);
}

void save_csv(const ComboTimeline& r, const std::string& path) {
    std::string out = "epoch,cc,cf,fc,ff\n";
    for (size_t i = 0; i < r.epochs.size(); ++i) {
        out += std::to_string(r.epochs[i]);
        for (size_t c = 0; c < 4; ++c) out += "," + std::to_string(r.counts[i][c]);
        out += "\n";
    }
    write_text(path, out);
}

void save_csv(const TransitionReport& r, const std::string& path) {
    std::string out = "epoch,cc,cf,fc,ff\n";
    for (size_t i = 0; i < r.epochs.size(); ++i) {
        out += std::to_string(r.epochs[i]);
        for (size_t c = 0; c < 4; ++c) out += "," + fmt_g9(r.ratios[i][c]);
        out += "\n";
    }
    write_text(path, out);
}

void save_csv(const HierarchyReport& r, const std::string& path) {
    std::string out = "epoch,cc_in,cf_in,cf_out,fc_out,ff_in,ff_out\n";
    for (size_t i = 0; i < r.epochs.size(); ++i) {
        const auto& c = r.counts[i];
        out += std::to_string(r.epochs[i]) + "," + std::to_string(c.cc_in) + "," +
               std::to_string(c.cf_in) + "," + std::to_string(c.cf_out) + "," +
               std::to_string(c.fc_out) + "," + std::to_string(c.ff_in) + "," +
               std::to_string(c.ff_out) + "\n";
    }
    write_text(path, out);
}

void save_csv(const ComboMetricReport& r, const std::string& path) {
    std::string out = "epoch,cc_mae,cc_n,cf_mae,cf_n,fc_mae,fc_n,ff_mae,ff_n\n";
    for (const auto& row : r.rows) {
        out += std::to_string(row.epoch);
        for (size_t c = 0; c < 4; ++c) {
            out += ",";
            if (row.count[c] > 0) out += fmt_g9(row.mean[c]);
            out += "," + std::to_string(row.count[c]);
        }
        out += "\n";
    }
    write_text(path, out);
}

void save_csv(const std::vector<GroupRow>& rows, const std::string& path) {
    std::string out = "epoch,group_id,split,n,main_error,aux_accuracy\n";
    for (const auto& g : rows)
        out += std::to_string(g.epoch) + "," + std::to_string(g.group_id) + "," + g.split + "," +
               std::to_string(g.n) + "," + fmt_g9(g.main_error) + "," + fmt_g9(g.aux_accuracy) +
               "\n";
    write_text(path, out);
}

void save_summary_json(const CorrelationReport& r, const std::string& path) {
    json j;
    j["analysis"] = "error_correlation";
    j["main_task"] = r.main_task;
    j["subset_size"] = r.subset.size();
    json aux = json::object();
    for (const auto& row : r.rows) {
        auto& a = aux[row.aux_task];
        if (a.is_null()) {
            a["epochs"] = 0;
            a["defined_epochs"] = 0;
            a["significant_epochs"] = 0;
            a["final_r"] = nullptr;
        }
        a["epochs"] = a["epochs"].get<int>() + 1;
        if (row.defined) {
            a["defined_epochs"] = a["defined_epochs"].get<int>() + 1;
            if (row.p < 0.05) a["significant_epochs"] = a["significant_epochs"].get<int>() + 1;
            a["final_r"] = row.r;  // rows are epoch-ordered; last defined wins
        }
    }
    j["aux"] = aux;
    write_json(j, path);
}

void save_summary_json(const ComboTimeline& r, const std::string& path) {
    json j;
    j["analysis"] = "combo_timeline";
    j["aux_task"] = r.aux_task;
    j["main_task"] = r.main_task;
    j["epochs"] = r.epochs.size();
    if (!r.counts.empty()) {
        const auto& last = r.counts.back();
        j["eval_size"] = last[0] + last[1] + last[2] + last[3];
        j["final"] = {{"cc", last[0]}, {"cf", last[1]}, {"fc", last[2]}, {"ff", last[3]}};
    }
    write_json(j, path);
}

void save_summary_json(const TransitionReport& r, const std::string& path) {
    json j;
    j["analysis"] = "transition_tracking";
    j["anchor_epoch"] = r.anchor_epoch;
    j["anchor"] = combo_name(r.anchor);
    j["anchor_size"] = r.anchor_samples.size();
    if (r.ratios.empty()) j["final_ratios"] = nullptr;
    else {
        const auto& last = r.ratios.back();
        j["final_ratios"] = {{"cc", last[0]}, {"cf", last[1]}, {"fc", last[2]}, {"ff", last[3]}};
    }
    write_json(j, path);
}

void save_summary_json(const HierarchyReport& r, const std::string& path) {
    json j;
    j["analysis"] = "hierarchy_adherence";
    j["epochs"] = r.epochs.size();
    if (!r.counts.empty()) {
        const auto& c = r.counts.back();
        j["final"] = {{"cc_in", c.cc_in}, {"cf_in", c.cf_in},   {"cf_out", c.cf_out},
                      {"fc_out", c.fc_out}, {"ff_in", c.ff_in}, {"ff_out", c.ff_out}};
    }
    write_json(j, path);
}

void save_summary_json(const ComboMetricReport& r, const std::string& path) {
    json j;
    j["analysis"] = "metric_by_combo";
    j["value_task"] = r.value_task;
    j["epochs"] = r.rows.size();
    if (!r.rows.empty()) {
        const auto& last = r.rows.back();
        json cells = json::object();
        const char* names[4] = {"cc", "cf", "fc", "ff"};
        for (size_t c = 0; c < 4; ++c)
            if (last.count[c] > 0)
                cells[names[c]] = {{"mae", last.mean[c]}, {"n", last.count[c]}};
        j["final"] = cells;
    }
    write_json(j, path);
}

void save_summary_json(const std::vector<GroupRow>& rows, const std::string& path) {
    json j;
    j["analysis"] = "per_group";
    j["rows"] = rows.size();
    std::set<int64_t> groups;
    std::set<int> epochs;
    for (const auto& g : rows) {
        groups.insert(g.group_id);
        epochs.insert(g.epoch);
    }
    j["groups"] = groups.size();
    j["epochs"] = epochs.size();
    write_json(j, path);
}

} // namespace mtx

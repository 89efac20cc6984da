// SPDX-License-Identifier: Apache-2.0
#include "mtx/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mtx/dataset_io.hpp"
#include "mtx/error.hpp"
#include "mtx/split.hpp"
#include "mtx/xai.hpp"

namespace mtx {
namespace {

using nlohmann::json;

std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    out << text;
    require(out.good(), ErrorCode::io, "write failed for '" + path + "'");
}

json params_json(const ExperimentConfig& cfg) {
    json p;
    if (cfg.dataset.kind == "pixel") {
        const auto& g = cfg.dataset.pixel;
        p = {{"n_fields", g.n_fields},
             {"pixels_per_field", g.pixels_per_field},
             {"season_len", g.season_len},
             {"coupling", g.coupling},
             {"spectral_noise", g.spectral_noise},
             {"yield_noise", g.yield_noise},
             {"seed", g.seed}};
    } else if (cfg.dataset.kind == "patch") {
        const auto& g = cfg.dataset.patch;
        p = {{"n_regions", g.n_regions},
             {"patches_per_region", g.patches_per_region},
             {"height", g.height},
             {"width", g.width},
             {"noise", g.noise},
             {"seed", g.seed}};
    } else if (cfg.dataset.kind == "tree") {
        const auto& g = cfg.dataset.tree;
        p = {{"n_stands", g.n_stands},
             {"samples_per_stand", g.samples_per_stand},
             {"height", g.height},
             {"width", g.width},
             {"noise", g.noise},
             {"seed", g.seed}};
    }
    return p;
}

// Everything that shaped the data beyond the user-facing parameters, so a
// dataset directory is self-describing.
json constants_json(const std::string& kind, const PixelLedger* pl, const PatchLedger* al,
                    const TreeLedger* tl) {
    json c;
    if (kind == "pixel") {
        c["yield_base"] = pl->base;
        c["yield_gain"] = pl->gain;
        c["crops"] = 3;
        c["spectral_channels"] = 12;
        c["scene_classes"] = 13;
        c["templates"] = pl->templates; // [crop][step][channel], noise-free
    } else if (kind == "patch") {
        c["lulc_classes"] = 12;
        c["optical_channels"] = 12;
        c["climate_zones"] = 12;
        c["boundary_top_decile"] = 0.1;
        c["signatures"] = al->signatures; // [class][optical channel]
    } else if (kind == "tree") {
        c["species"] = 15;
        c["stand_types"] = 9;
        c["foliage_types"] = 3;
        c["parent_species_to_stand"] = tl->parent_32;
        c["parent_stand_to_foliage"] = tl->parent_21;
        c["age_range"] = tl->age_range;
        c["mixed_fraction"] = tl->mixed_fraction;
        c["mix_weight_range"] = tl->mix_weight_range;
        c["clean_density_range"] = tl->clean_density_range;
        c["mixed_density_range"] = tl->mixed_density_range;
    }
    return c;
}

struct RunMeta {
    std::string name;
    std::string main_task;
    int best_epoch = 0;
    int epochs = 0;
    std::vector<std::string> tasks;
    bool loaded = false;
};

RunMeta read_run_meta(const std::string& run_dir) {
    RunMeta meta;
    auto path = join(run_dir, "run.json");
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) return meta;
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorCode::data, "corrupt run.json in '" + run_dir + "': " + e.what());
    }
    meta.name = j.value("name", std::string());
    meta.main_task = j.value("main_task", std::string());
    meta.best_epoch = j.value("best_epoch", 0);
    meta.epochs = j.value("epochs", 0);
    if (j.contains("tasks"))
        for (const auto& t : j.at("tasks")) meta.tasks.push_back(t.at("name").get<std::string>());
    meta.loaded = true;
    return meta;
}

PredictionLog load_run_log(const std::string& run_dir) {
    auto path = join(run_dir, "predictions.csv");
    require(std::filesystem::exists(path), ErrorCode::io,
            "'" + run_dir + "' has no prediction log");
    return PredictionLog::load(path);
}

// sample -> split name, straight from the run's splits.csv.
std::unordered_map<int64_t, std::string> load_split_map(const std::string& run_dir) {
    std::unordered_map<int64_t, std::string> out;
    std::ifstream in(join(run_dir, "splits.csv"), std::ios::binary);
    require(in.good(), ErrorCode::io, "'" + run_dir + "' has no splits.csv");
    std::string line;
    std::getline(in, line);
    require(line == "sample_id,group_id,stratum,split", ErrorCode::data,
            "unexpected splits.csv header in '" + run_dir + "'");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string sid, gid, stratum, split;
        require(std::getline(row, sid, ',') && std::getline(row, gid, ',') &&
                    std::getline(row, stratum, ',') && std::getline(row, split),
                ErrorCode::data, "malformed splits.csv row '" + line + "'");
        out[std::stoll(sid)] = split;
    }
    return out;
}

std::vector<int> read_parent_map_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot read parent map file '" + path + "'");
    std::vector<int> map;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        try {
            size_t used = 0;
            map.push_back(std::stoi(line, &used));
            require(used == line.size(), ErrorCode::data, "");
        } catch (const std::exception&) {
            fail(ErrorCode::data, "parent map file '" + path + "' line " +
                                      std::to_string(lineno) + " is not an integer");
        }
    }
    require(!map.empty(), ErrorCode::data, "parent map file '" + path + "' is empty");
    return map;
}

Combo parse_combo(const std::string& s) {
    for (auto c : {Combo::CC, Combo::CF, Combo::FC, Combo::FF})
        if (s == combo_name(c)) return c;
    fail(ErrorCode::usage, "'" + s + "' is not a correctness combination (CC, CF, FC or FF)");
}

struct MetricsTable {
    // (epoch, split, task, metric) rows in file order
    std::vector<MetricRow> rows;
};

MetricsTable load_metrics_csv(const std::string& run_dir) {
    std::ifstream in(join(run_dir, "metrics.csv"), std::ios::binary);
    require(in.good(), ErrorCode::io, "'" + run_dir + "' has no metrics.csv");
    std::string line;
    std::getline(in, line);
    require(line == "epoch,split,task,metric,value", ErrorCode::data,
            "unexpected metrics.csv header in '" + run_dir + "'");
    MetricsTable t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string epoch, split, task, metric, value;
        require(std::getline(row, epoch, ',') && std::getline(row, split, ',') &&
                    std::getline(row, task, ',') && std::getline(row, metric, ',') &&
                    std::getline(row, value),
                ErrorCode::data, "malformed metrics.csv row '" + line + "'");
        t.rows.push_back({std::stoi(epoch), split, task, metric, std::stod(value)});
    }
    return t;
}

} // namespace

std::string resolve_out_dir(const std::string& flag_out, const ExperimentConfig& cfg,
                            const char* env_root) {
    if (!flag_out.empty()) return flag_out;
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* root = std::getenv(env_root); root && *root)
        return join(root, cfg.name);
    return cfg.name;
}

GenerateResult cmd_generate(const ExperimentConfig& cfg, const std::string& dir) {
    require(!cfg.dataset.kind.empty(), ErrorCode::config,
            "generate needs a [dataset] kind; this config points at an existing path");

    Dataset data;
    json generator;
    generator["params"] = params_json(cfg);
    std::string extra;
    if (cfg.dataset.kind == "pixel") {
        auto [d, ledger] = gen_pixel_dataset(cfg.dataset.pixel);
        data = std::move(d);
        generator["constants"] = constants_json("pixel", &ledger, nullptr, nullptr);
        extra = "; coupling " + fmt_g9(cfg.dataset.pixel.coupling);
    } else if (cfg.dataset.kind == "patch") {
        auto [d, ledger] = gen_patch_dataset(cfg.dataset.patch);
        data = std::move(d);
        generator["constants"] = constants_json("patch", nullptr, &ledger, nullptr);
    } else if (cfg.dataset.kind == "tree") {
        auto [d, ledger] = gen_tree_dataset(cfg.dataset.tree);
        data = std::move(d);
        generator["constants"] = constants_json("tree", nullptr, nullptr, &ledger);
        std::string l32, l21;
        for (int p : ledger.parent_32) l32 += std::to_string(p) + "\n";
        for (int p : ledger.parent_21) l21 += std::to_string(p) + "\n";
        std::filesystem::create_directories(dir);
        write_text(join(dir, "parent_l3_to_l2.txt"), l32);
        write_text(join(dir, "parent_l2_to_l1.txt"), l21);
        extra = "; parent maps written";
    }
    save_dataset(data, dir, generator.dump());

    GenerateResult res;
    res.dir = dir;
    res.samples = data.size();
    std::set<int64_t> groups(data.group_ids.begin(), data.group_ids.end());
    res.groups = groups.size();
    res.summary = cfg.dataset.kind + " dataset: " + std::to_string(res.samples) +
                  " samples in " + std::to_string(res.groups) + " groups, seed " +
                  std::to_string(cfg.dataset.kind == "pixel"   ? cfg.dataset.pixel.seed
                                 : cfg.dataset.kind == "patch" ? cfg.dataset.patch.seed
                                                               : cfg.dataset.tree.seed) +
                  extra;
    return res;
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::string& run_dir) {
    Dataset data;
    if (!cfg.dataset.path.empty()) data = load_dataset(cfg.dataset.path);
    else if (cfg.dataset.kind == "pixel") data = gen_pixel_dataset(cfg.dataset.pixel).first;
    else if (cfg.dataset.kind == "patch") data = gen_patch_dataset(cfg.dataset.patch).first;
    else if (cfg.dataset.kind == "tree") data = gen_tree_dataset(cfg.dataset.tree).first;
    else fail(ErrorCode::config, "config names neither a dataset kind nor a path");

    auto plan = resolve_plan(data, cfg);
    auto model = MultitaskModel::build(data, plan, cfg.seed);
    auto split = split_grouped_stratified(split_items(data), SplitFractions{}, cfg.train.seed);

    TrainConfig tc = cfg.train;
    tc.out_dir = run_dir;
    TrainOutcome out;
    out.run_dir = run_dir;
    out.result = train(model, data, split, tc);

    json run;
    run["name"] = cfg.name;
    run["seed"] = cfg.seed;
    run["main_task"] = plan.main_task;
    run["inputs"] = plan.inputs;
    json tasks = json::array();
    for (const auto& t : plan.tasks)
        tasks.push_back({{"name", t.name},
                         {"kind", task_kind_name(t.kind)},
                         {"weight", t.raw_weight},
                         {"head", t.head_layout}});
    run["tasks"] = tasks;
    run["epochs"] = cfg.train.epochs;
    run["best_epoch"] = out.result.best_epoch;
    run["best_metric"] = out.result.best_metric_name;
    run["best_value"] = out.result.best_val_metric;
    if (!cfg.dataset.path.empty()) run["dataset"] = {{"path", cfg.dataset.path}};
    else run["dataset"] = {{"kind", cfg.dataset.kind}, {"params", params_json(cfg)}};
    write_text(join(run_dir, "run.json"), run.dump(2) + "\n");
    return out;
}

std::vector<std::string> cmd_analyze(const AnalyzeRequest& req) {
    auto log = load_run_log(req.run_dir);
    auto meta = read_run_meta(req.run_dir);
    auto out_dir = req.out_dir.empty() ? join(req.run_dir, "analysis") : req.out_dir;
    std::filesystem::create_directories(out_dir);

    auto main_task = req.main_task.empty() ? meta.main_task : req.main_task;
    require(!main_task.empty() || req.analysis == "maps" || req.analysis == "hierarchy",
            ErrorCode::usage, "no main task: pass --main or run against a run.json directory");

    std::vector<std::string> files;
    auto add = [&](const std::string& p) { files.push_back(p); };

    if (req.analysis == "correlation") {
        auto aux = req.aux_tasks;
        if (aux.empty()) {
            for (const auto& t : meta.tasks)
                if (t != main_task) aux.push_back(t);
            require(!aux.empty(), ErrorCode::usage,
                    "no auxiliary tasks: pass --aux or run against a run.json directory");
        }
        auto split_map = load_split_map(req.run_dir);
        std::vector<int64_t> pool;
        std::set<int64_t> seen;
        for (const auto& r : log.rows)
            if (seen.insert(r.sample_id).second) {
                auto it = split_map.find(r.sample_id);
                if (it != split_map.end() && it->second == "test") pool.push_back(r.sample_id);
            }
        CorrelationConfig cc;
        cc.subset_fraction = req.subset_fraction;
        cc.permutations = req.permutations;
        cc.seed = req.seed;
        auto rep = correlation_over_epochs(log, main_task, aux, pool, cc);
        save_csv(rep, join(out_dir, "correlation.csv"));
        save_summary_json(rep, join(out_dir, "correlation.json"));
        add(join(out_dir, "correlation.csv"));
        add(join(out_dir, "correlation.json"));
    } else if (req.analysis == "combos") {
        require(!req.aux_task.empty(), ErrorCode::usage, "combos needs --aux <task>");
        auto tl = combo_timeline(log, req.aux_task, main_task);
        save_csv(tl, join(out_dir, "combo_timeline.csv"));
        save_summary_json(tl, join(out_dir, "combo_timeline.json"));
        add(join(out_dir, "combo_timeline.csv"));
        add(join(out_dir, "combo_timeline.json"));
        auto tr = transition_tracking(log, req.aux_task, main_task, req.anchor_epoch,
                                      parse_combo(req.anchor));
        save_csv(tr, join(out_dir, "transition.csv"));
        save_summary_json(tr, join(out_dir, "transition.json"));
        add(join(out_dir, "transition.csv"));
        add(join(out_dir, "transition.json"));
    } else if (req.analysis == "hierarchy") {
        require(!req.parent_task.empty() && !req.child_task.empty(), ErrorCode::usage,
                "hierarchy needs --parent <task> and --child <task>");
        require(!req.parent_map_file.empty(), ErrorCode::usage,
                "hierarchy needs --parent-map <file>");
        auto map = read_parent_map_file(req.parent_map_file);
        auto rep = hierarchy_adherence(log, map, req.parent_task, req.child_task);
        save_csv(rep, join(out_dir, "hierarchy.csv"));
        save_summary_json(rep, join(out_dir, "hierarchy.json"));
        add(join(out_dir, "hierarchy.csv"));
        add(join(out_dir, "hierarchy.json"));
    } else if (req.analysis == "groups") {
        require(!req.aux_task.empty(), ErrorCode::usage, "groups needs --aux <task>");
        auto rep = per_group_aggregate(log, main_task, req.aux_task, load_split_map(req.run_dir));
        save_csv(rep, join(out_dir, "groups.csv"));
        save_summary_json(rep, join(out_dir, "groups.json"));
        add(join(out_dir, "groups.csv"));
        add(join(out_dir, "groups.json"));
    } else if (req.analysis == "maps") {
        require(req.sample_id >= 0, ErrorCode::usage, "maps needs --sample <id>");
        int epoch = req.epoch >= 0 ? req.epoch : meta.best_epoch;
        auto sub = join(out_dir, "maps_s" + std::to_string(req.sample_id) + "_e" +
                                     std::to_string(epoch));
        auto bundle = error_map_export(log, req.sample_id, epoch, sub);
        for (const auto& f : bundle.files) add(f);
    } else {
        fail(ErrorCode::usage, "unknown analysis '" + req.analysis +
                                   "' (correlation, combos, hierarchy, groups or maps)");
    }
    return files;
}

std::string cmd_report(const std::vector<std::string>& run_dirs, const ReportOptions& opts) {
    require(!run_dirs.empty(), ErrorCode::usage, "report needs at least one run directory");
    require(opts.format == "markdown" || opts.format == "csv", ErrorCode::usage,
            "report format must be markdown or csv");

    struct RunRow {
        std::string name;
        int best_epoch = 0;
        std::map<std::string, double> cells; // column label -> value
    };
    std::vector<RunRow> runs;
    std::set<std::string> columns;
    for (const auto& dir : run_dirs) {
        auto meta = read_run_meta(dir);
        require(meta.loaded, ErrorCode::io, "'" + dir + "' has no run.json");
        auto metrics = load_metrics_csv(dir);
        RunRow row;
        row.name = meta.name.empty() ? std::filesystem::path(dir).filename().string() : meta.name;
        row.best_epoch = meta.best_epoch;
        for (const auto& m : metrics.rows) {
            if (m.split != "test" || m.epoch != meta.best_epoch) continue;
            auto label = m.task + ":" + m.metric;
            row.cells[label] = m.value;
            columns.insert(label);
        }
        runs.push_back(std::move(row));
    }

    // Flag assignment per column. A shared best value leaves second-best
    // unassigned; otherwise every holder of the runner-up value is flagged.
    std::map<std::string, std::pair<double, double>> limits; // col -> (best, second)
    std::map<std::string, bool> has_second;
    for (const auto& col : columns) {
        auto metric = col.substr(col.find(':') + 1);
        bool up = metric_higher_is_better(metric);
        std::vector<double> values;
        for (const auto& r : runs) {
            auto it = r.cells.find(col);
            if (it != r.cells.end()) values.push_back(it->second);
        }
        std::sort(values.begin(), values.end());
        if (up) std::reverse(values.begin(), values.end());
        double best = values.front();
        size_t at_best = 0;
        while (at_best < values.size() && values[at_best] == best) ++at_best;
        bool second = at_best == 1 && at_best < values.size();
        limits[col] = {best, second ? values[at_best] : 0.0};
        has_second[col] = second;
    }
    auto flag_of = [&](const std::string& col, double v) -> std::string {
        if (v == limits[col].first) return "best";
        if (has_second[col] && v == limits[col].second) return "second";
        return "";
    };

    std::string out;
    if (opts.format == "markdown") {
        out = "| run | best_epoch |";
        for (const auto& col : columns) out += " " + col + " |";
        out += "\n|---|---|";
        for (size_t i = 0; i < columns.size(); ++i) out += "---|";
        out += "\n";
        for (const auto& r : runs) {
            out += "| " + r.name + " | " + std::to_string(r.best_epoch) + " |";
            for (const auto& col : columns) {
                auto it = r.cells.find(col);
                if (it == r.cells.end()) {
                    out += "  |";
                    continue;
                }
                auto flag = flag_of(col, it->second);
                auto text = fmt_g9(it->second);
                if (flag == "best") text = "**" + text + "**";
                else if (flag == "second") text = "_" + text + "_";
                out += " " + text + " |";
            }
            out += "\n";
        }
    } else {
        out = "run,best_epoch";
        for (const auto& col : columns) out += "," + col + "," + col + " flag";
        out += "\n";
        for (const auto& r : runs) {
            out += r.name + "," + std::to_string(r.best_epoch);
            for (const auto& col : columns) {
                auto it = r.cells.find(col);
                if (it == r.cells.end()) {
                    out += ",,";
                    continue;
                }
                out += "," + fmt_g9(it->second) + "," + flag_of(col, it->second);
            }
            out += "\n";
        }
    }
    if (!opts.out_path.empty()) write_text(opts.out_path, out);
    return out;
}

} // namespace mtx

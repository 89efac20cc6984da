// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each criterion prints exactly one
// [PASS]/[FAIL] line with the measured numbers and the pinned limits, and the
// process exits nonzero if any criterion fails. `--only 4,8` restricts the
// run to a subset while tuning.
//
// Everything here is checked against values computed independently in this
// file (naive metric references, hand partition identities) or against
// thresholds pinned below; nothing is read back from the library under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtx/config.hpp"
#include "mtx/dataset.hpp"
#include "mtx/dataset_io.hpp"
#include "mtx/error.hpp"
#include "mtx/experiment.hpp"
#include "mtx/gradcheck.hpp"
#include "mtx/metrics.hpp"
#include "mtx/multitask.hpp"
#include "mtx/ops.hpp"
#include "mtx/predlog.hpp"
#include "mtx/rng.hpp"
#include "mtx/split.hpp"
#include "mtx/synthdata.hpp"
#include "mtx/tensor.hpp"
#include "mtx/xai.hpp"

namespace fs = std::filesystem;
using namespace mtx;
using TD = Tensor<double>;

namespace {

// ------------------------------------------------------------ utilities ----

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fresh_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / "mtx_acceptance" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot read '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double metric_at(const std::vector<MetricRow>& rows, int epoch, const std::string& split,
                 const std::string& task, const std::string& metric) {
    for (const auto& r : rows)
        if (r.epoch == epoch && r.split == split && r.task == task && r.metric == metric)
            return r.value;
    fail(ErrorCode::analyze, "metric row not found: epoch " + std::to_string(epoch) + " " +
                                 split + " " + task + " " + metric);
}

struct RunArtifacts {
    TrainResult result;
    SplitAssignment split;
    std::string dir;
};

RunArtifacts run_training(const Dataset& data, const ModalityRoleConfig& roles,
                          const std::map<std::string, double>& weights, TrainConfig tc,
                          const std::string& dir) {
    auto plan = plan_roles(data, roles);
    for (auto& t : plan.tasks) {
        auto it = weights.find(t.name);
        if (it != weights.end()) t.raw_weight = it->second;
    }
    auto model = MultitaskModel::build(data, plan, tc.seed);
    RunArtifacts out;
    out.split = split_grouped_stratified(split_items(data), SplitFractions{}, tc.seed);
    tc.out_dir = dir;
    out.result = train(model, data, out.split, tc);
    out.dir = dir;
    return out;
}

// Per-sample payload error of one task at one epoch.
std::unordered_map<int64_t, double> task_errors_at(const PredictionLog& log, int epoch,
                                                   const std::string& task) {
    std::unordered_map<int64_t, double> out;
    for (const auto& r : log.rows)
        if (r.epoch == epoch && r.task == task)
            out[r.sample_id] = payload_error(parse_payload(r.pred), parse_payload(r.target));
    return out;
}

// Predicted and target class index of one classification task at one epoch.
std::unordered_map<int64_t, std::pair<int, int>> class_rows_at(const PredictionLog& log,
                                                               int epoch,
                                                               const std::string& task) {
    std::unordered_map<int64_t, std::pair<int, int>> out;
    for (const auto& r : log.rows)
        if (r.epoch == epoch && r.task == task) {
            auto p = parse_payload(r.pred);
            auto t = parse_payload(r.target);
            require(p.kind == PayloadKind::classification && !p.ids.empty() && !t.ids.empty(),
                    ErrorCode::analyze, "classification payload expected for " + task);
            out[r.sample_id] = {p.ids[0], t.ids[0]};
        }
    return out;
}

// --------------------------------------------- criterion 1: gradients ----

TD randt(Shape shape, Rng& rng, bool rg = true, double scale = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal() * scale;
    return TD::from_data(std::move(shape), std::move(v), rg);
}

TD weighted_sum(const TD& y, uint64_t seed = 77) {
    Rng rng(seed);
    std::vector<double> w(y.numel());
    for (auto& x : w) x = rng.uniform(0.5, 1.5);
    return sum_all(mul(y, TD::from_data(y.shape(), std::move(w))));
}

bool criterion_gradients(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(1);
    auto a = randt({3, 4}, rng), b = randt({3, 4}, rng), bias = randt({4}, rng);
    auto x4 = randt({2, 3, 4, 4}, rng), cbias = randt({3}, rng);
    auto ma = randt({4, 3}, rng), mb = randt({3, 5}, rng);
    auto ba = randt({3, 2, 4}, rng), bb = randt({3, 4, 2}, rng);
    auto t3 = randt({2, 3, 4}, rng), cb = randt({3, 2}, rng);
    auto act = randt({4, 6}, rng), s3 = randt({2, 3, 5}, rng);
    auto gamma = randt({6}, rng, true, 0.3), beta = randt({6}, rng, true, 0.3);
    auto dx = randt({4, 8}, rng);
    auto cx = randt({2, 3, 6, 6}, rng), ck = randt({4, 3, 3, 3}, rng, true, 0.5);
    auto ck1 = randt({2, 3, 1, 1}, rng);
    auto sq = randt({3, 5, 4}, rng), table = randt({6, 4}, rng), bv = randt({2, 3}, rng);
    auto lp = randt({3, 4}, rng), lt = randt({3, 4}, rng, false);
    auto logits = randt({5, 3}, rng), seg_logits = randt({2, 3, 4, 4}, rng);
    std::vector<int> cls = {0, 2, 1, 2, 0};
    std::vector<int> seg_cls(2 * 4 * 4);
    Rng trng(11);
    for (auto& t : seg_cls) t = int(trng.below(3));
    BatchNormState<double> bn_train(6), bn_eval(6);
    Rng r2(6);
    for (auto& v : bn_eval.running_mean) v = r2.normal() * 0.2;
    for (auto& v : bn_eval.running_var) v = 1.0 + 0.3 * r2.uniform();

    using Case = std::pair<const char*, std::function<GradCheckResult()>>;
    auto chk = [](auto f, std::vector<TD> params) {
        return finite_difference_check<double>(f, std::move(params));
    };
    std::vector<Case> cases = {
        {"add", [&] { return chk([&] { return weighted_sum(add(a, b)); }, {a, b}); }},
        {"mul", [&] { return chk([&] { return weighted_sum(mul(a, b)); }, {a, b}); }},
        {"mul_scalar",
         [&] { return chk([&] { return weighted_sum(mul_scalar(a, -2.7)); }, {a}); }},
        {"add_bias",
         [&] { return chk([&] { return weighted_sum(add_bias(a, bias)); }, {a, bias}); }},
        {"add_channel_bias",
         [&] {
             return chk([&] { return weighted_sum(add_channel_bias(x4, cbias)); }, {x4, cbias});
         }},
        {"sum_all", [&] { return chk([&] { return sum_all(mul(a, a)); }, {a}); }},
        {"reshape",
         [&] { return chk([&] { return weighted_sum(reshape(a, {2, 6})); }, {a}); }},
        {"transpose2d",
         [&] { return chk([&] { return weighted_sum(transpose2d(a)); }, {a}); }},
        {"transpose_last2",
         [&] { return chk([&] { return weighted_sum(transpose_last2(t3)); }, {t3}); }},
        {"slice", [&] { return chk([&] { return weighted_sum(slice(t3, 1, 1, 2)); }, {t3}); }},
        {"concat",
         [&] {
             return chk([&] { return weighted_sum(concat<double>({a, cb}, 1)); }, {a, cb});
         }},
        {"matmul",
         [&] { return chk([&] { return weighted_sum(matmul(ma, mb)); }, {ma, mb}); }},
        {"bmm", [&] { return chk([&] { return weighted_sum(bmm(ba, bb)); }, {ba, bb}); }},
        {"relu", [&] { return chk([&] { return weighted_sum(relu(act)); }, {act}); }},
        {"sigmoid", [&] { return chk([&] { return weighted_sum(sigmoid(act)); }, {act}); }},
        {"softmax2d",
         [&] { return chk([&] { return weighted_sum(softmax(act, 1)); }, {act}); }},
        {"softmax3d", [&] { return chk([&] { return weighted_sum(softmax(s3, 2)); }, {s3}); }},
        {"layer_norm",
         [&] {
             return chk([&] { return weighted_sum(layer_norm(act, gamma, beta)); },
                        {act, gamma, beta});
         }},
        {"batchnorm1d_train",
         [&] {
             return chk([&] { return weighted_sum(batchnorm1d(act, gamma, beta, bn_train, true)); },
                        {act, gamma, beta});
         }},
        {"batchnorm1d_eval",
         [&] {
             return chk([&] { return weighted_sum(batchnorm1d(act, gamma, beta, bn_eval, false)); },
                        {act, gamma, beta});
         }},
        {"dropout",
         [&] {
             return chk(
                 [&] {
                     Rng mask_rng(123);
                     return weighted_sum(dropout(dx, 0.4, true, mask_rng));
                 },
                 {dx});
         }},
        {"conv2d_s1p1",
         [&] { return chk([&] { return weighted_sum(conv2d(cx, ck, 1, 1)); }, {cx, ck}); }},
        {"conv2d_s2p0",
         [&] { return chk([&] { return weighted_sum(conv2d(cx, ck, 2, 0)); }, {cx, ck}); }},
        {"conv2d_1x1",
         [&] { return chk([&] { return weighted_sum(conv2d(cx, ck1)); }, {cx, ck1}); }},
        {"maxpool2", [&] { return chk([&] { return weighted_sum(maxpool2(cx)); }, {cx}); }},
        {"upsample2", [&] { return chk([&] { return weighted_sum(upsample2(cx)); }, {cx}); }},
        {"global_avg_pool",
         [&] { return chk([&] { return weighted_sum(global_avg_pool(cx)); }, {cx}); }},
        {"seq_mean",
         [&] { return chk([&] { return weighted_sum(seq_mean(sq, {5, 3, 4})); }, {sq}); }},
        {"embedding",
         [&] {
             return chk([&] { return weighted_sum(embedding(table, {1, 4, 1, 0})); }, {table});
         }},
        {"broadcast_to_map",
         [&] { return chk([&] { return weighted_sum(broadcast_to_map(bv, 3, 2)); }, {bv}); }},
        {"mse_loss", [&] { return chk([&] { return mse_loss(lp, lt); }, {lp}); }},
        {"cross_entropy",
         [&] { return chk([&] { return cross_entropy_loss(logits, cls); }, {logits}); }},
        {"cross_entropy_seg",
         [&] { return chk([&] { return cross_entropy_loss(seg_logits, seg_cls); }, {seg_logits}); }},
    };

    double worst = 0;
    std::string worst_op = "-";
    for (auto& [name, run] : cases) {
        auto r = run();
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_op = name;
        }
    }
    double t = seconds_since(t0);
    detail = fmt("%zu ops, worst rel err %.2e (%s) vs 1e-4, %.1fs vs 120s", cases.size(),
                 worst, worst_op.c_str(), t);
    return worst <= 1e-4 && t < 120.0;
}

// ----------------------------------------- criterion 2: metric oracles ----

double naive_r2(const std::vector<double>& p, const std::vector<double>& t) {
    double mean = 0;
    for (double v : t) mean += v;
    mean /= double(t.size());
    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < t.size(); ++i) {
        ss_res += (t[i] - p[i]) * (t[i] - p[i]);
        ss_tot += (t[i] - mean) * (t[i] - mean);
    }
    return 1.0 - ss_res / ss_tot;
}

double naive_mae(const std::vector<double>& p, const std::vector<double>& t) {
    double s = 0;
    for (size_t i = 0; i < t.size(); ++i) s += std::fabs(p[i] - t[i]);
    return s / double(t.size());
}

double naive_accuracy(const std::vector<int>& p, const std::vector<int>& t) {
    double c = 0;
    for (size_t i = 0; i < t.size(); ++i) c += p[i] == t[i];
    return c / double(t.size());
}

double naive_micro_f1(const std::vector<int>& p, const std::vector<int>& t, int k) {
    double tp = 0, fp = 0, fn = 0;
    for (int c = 0; c < k; ++c)
        for (size_t i = 0; i < t.size(); ++i) {
            if (p[i] == c && t[i] == c) tp += 1;
            if (p[i] == c && t[i] != c) fp += 1;
            if (p[i] != c && t[i] == c) fn += 1;
        }
    return 2 * tp / (2 * tp + fp + fn);
}

double naive_iou(const std::vector<int>& p, const std::vector<int>& t, int k) {
    double sum = 0;
    int present = 0;
    for (int c = 0; c < k; ++c) {
        double inter = 0, uni = 0;
        for (size_t i = 0; i < t.size(); ++i) {
            inter += p[i] == c && t[i] == c;
            uni += p[i] == c || t[i] == c;
        }
        if (uni > 0) {
            sum += inter / uni;
            ++present;
        }
    }
    return sum / double(present);
}

double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(x.size());
    my /= double(y.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

bool criterion_metric_oracles(std::string& detail) {
    Rng rng(2024);
    double worst = 0;
    auto track = [&](double lib, double ref) { worst = std::max(worst, std::fabs(lib - ref)); };
    for (int inst = 0; inst < 100; ++inst) {
        size_t n = 3 + rng.below(198);
        std::vector<double> p(n), t(n);
        for (size_t i = 0; i < n; ++i) {
            p[i] = rng.normal();
            t[i] = rng.normal() + 0.5 * p[i];
        }
        track(metric_r_squared(p, t), naive_r2(p, t));
        track(metric_mae(p, t), naive_mae(p, t));
        track(pearson(p, t), naive_pearson(p, t));

        size_t h = 1 + rng.below(16), w = 1 + rng.below(16);
        int k = 2 + int(rng.below(8));
        std::vector<int> cp(h * w), ct(h * w);
        for (size_t i = 0; i < cp.size(); ++i) {
            ct[i] = int(rng.below(uint64_t(k)));
            cp[i] = rng.uniform() < 0.7 ? ct[i] : int(rng.below(uint64_t(k)));
        }
        track(metric_accuracy(cp, ct, k), naive_accuracy(cp, ct));
        track(metric_micro_f1(cp, ct, k), naive_micro_f1(cp, ct, k));
        track(metric_mean_iou(cp, ct, k), naive_iou(cp, ct, k));
    }
    detail = fmt("100 instances x 6 metrics, worst |lib - naive| %.2e vs 1e-10", worst);
    return worst <= 1e-10;
}

// ------------------------------------ criterion 3: weight normalization ----

bool criterion_weight_normalization(std::string& detail) {
    auto w5 = normalize_weights({9, 1, 1, 1, 1});
    auto w3 = normalize_weights({4, 1, 1});
    double s5 = 0, s3 = 0;
    for (double w : w5) s5 += w;
    for (double w : w3) s3 += w;
    bool exact = w5[0] == 9.0 / 13.0 && w3[0] == 2.0 / 3.0;
    bool sums = std::fabs(s5 - 1.0) <= 1e-12 && std::fabs(s3 - 1.0) <= 1e-12;
    detail = fmt("[9,1,1,1,1] -> %.17g (exact 9/13: %s), [4,1,1] -> %.17g (exact 2/3: %s), "
                 "sums off by %.1e/%.1e vs 1e-12",
                 w5[0], exact && w5[0] == 9.0 / 13.0 ? "yes" : "no", w3[0],
                 w3[0] == 2.0 / 3.0 ? "yes" : "no", std::fabs(s5 - 1.0), std::fabs(s3 - 1.0));
    return exact && sums;
}

// -------------------------------------- criterion 4: role shift parity ----

bool criterion_role_shift(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    PixelDatasetParams params;
    params.n_fields = 200;
    params.pixels_per_field = 25;
    params.season_len = 12;
    params.coupling = 0.8;
    params.seed = 41;
    auto data = gen_pixel_dataset(params).first;

    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 64;
    tc.lr = 1e-3;
    tc.seed = 41;

    ModalityRoleConfig mtl;
    mtl.roles = {{"satellite", Role::input}, {"crop", Role::target}, {"yield", Role::target}};
    mtl.main_task = "yield";
    auto mtl_run = run_training(data, mtl, {{"yield", 0.67}, {"crop", 0.33}}, tc,
                                fresh_dir("c4_mtl"));

    ModalityRoleConfig base;
    base.roles = {{"satellite", Role::input}, {"yield", Role::target}};
    base.main_task = "yield";
    auto base_run = run_training(data, base, {}, tc, fresh_dir("c4_base"));

    double f1 = metric_at(mtl_run.result.metrics, mtl_run.result.best_epoch, "test", "crop", "f1");
    double r2_mtl =
        metric_at(mtl_run.result.metrics, mtl_run.result.best_epoch, "test", "yield", "r2");
    double r2_base =
        metric_at(base_run.result.metrics, base_run.result.best_epoch, "test", "yield", "r2");
    double t = seconds_since(t0);
    detail = fmt("crop f1 %.4f vs 0.95, yield r2 mtl %.4f / baseline %.4f (|d| %.4f vs 0.05, "
                 "both vs 0.6), %.0fs vs 600s",
                 f1, r2_mtl, r2_base, std::fabs(r2_mtl - r2_base), t);
    return f1 >= 0.95 && std::fabs(r2_mtl - r2_base) <= 0.05 && r2_mtl >= 0.6 &&
           r2_base >= 0.6 && t < 600.0;
}

// -------------------------------- criterion 5: planted coupling recovery ----

// Trains one seeded run at the given coupling and reports whether the
// crop-error/yield-error correlation at the best epoch is positive and
// permutation-significant over the test samples.
struct CouplingProbe {
    bool defined = false;
    double r = 0, p = 1;
};

CouplingProbe probe_coupling(double coupling, uint64_t seed) {
    PixelDatasetParams params;
    // One pixel per field keeps test samples exchangeable: with several
    // pixels sharing a field's fertility, both error series cluster by field
    // and the permutation null is too tight.
    params.n_fields = 250;
    params.pixels_per_field = 1;
    params.season_len = 8;
    params.coupling = coupling;
    params.spectral_noise = 0.5;  // enough crop errors to correlate against
    params.seed = 500 + seed;
    auto data = gen_pixel_dataset(params).first;

    TrainConfig tc;
    tc.epochs = 12;
    tc.batch_size = 32;
    tc.lr = 2e-3;
    tc.seed = 500 + seed;

    ModalityRoleConfig roles;
    roles.roles = {{"satellite", Role::input}, {"crop", Role::target}, {"yield", Role::target}};
    roles.main_task = "yield";
    auto run = run_training(data, roles, {{"yield", 0.67}, {"crop", 0.33}}, tc,
                            fresh_dir(fmt("c5_k%.0f_s%llu", coupling,
                                          (unsigned long long)seed)));

    auto log = PredictionLog::load(run.dir + "/predictions.csv");
    auto aux = task_errors_at(log, run.result.best_epoch, "crop");
    auto main_err = task_errors_at(log, run.result.best_epoch, "yield");
    std::vector<double> x, y;
    for (int64_t sid : run.split.samples[size_t(Split::test)]) {
        auto ia = aux.find(sid);
        auto im = main_err.find(sid);
        if (ia != aux.end() && im != main_err.end()) {
            x.push_back(ia->second);
            y.push_back(im->second);
        }
    }
    CouplingProbe probe;
    try {
        probe.r = pearson(x, y);
        probe.p = pearson_pvalue(x, y, 2000, 500 + seed);
        probe.defined = true;
    } catch (const Error&) {
        probe.defined = false;  // constant errors: no recoverable signal
    }
    return probe;
}

bool criterion_planted_coupling(std::string& detail) {
    int hits_k1 = 0, hits_k0 = 0;
    for (uint64_t s = 1; s <= 10; ++s) {
        auto p1 = probe_coupling(1.0, s);
        if (p1.defined && p1.r > 0 && p1.p < 0.05) ++hits_k1;
        auto p0 = probe_coupling(0.0, s);
        if (p0.defined && p0.p < 0.05) ++hits_k0;
    }
    detail = fmt("k=1 significant %d/10 vs >= 8, k=0 significant %d/10 vs <= 2", hits_k1,
                 hits_k0);
    return hits_k1 >= 8 && hits_k0 <= 2;
}

// --------------------------------------- shared tree run (criteria 6-10) ----

struct TreeRun {
    Dataset data;
    TreeLedger ledger;
    RunArtifacts run;
    PredictionLog log;
};

const TreeRun& tree_run() {
    static TreeRun tr = [] {
        TreeRun t;
        TreeDatasetParams params;
        params.n_stands = 300;
        params.samples_per_stand = 4;
        params.height = 16;
        params.width = 16;
        params.noise = 0.1;
        params.seed = 61;
        auto [data, ledger] = gen_tree_dataset(params);
        t.data = std::move(data);
        t.ledger = ledger;

        TrainConfig tc;
        tc.epochs = 10;
        tc.batch_size = 32;
        tc.lr = 1e-3;
        tc.seed = 61;
        ModalityRoleConfig roles;
        roles.roles = {{"aerial", Role::input},
                       {"s1", Role::input},
                       {"s2", Role::input},
                       {"l3", Role::target},
                       {"l2", Role::target},
                       {"l1", Role::target},
                       {"age", Role::target}};
        roles.main_task = "l3";
        t.run = run_training(t.data, roles, {}, tc, fresh_dir("tree_run"));
        t.log = PredictionLog::load(t.run.dir + "/predictions.csv");
        return t;
    }();
    return tr;
}

// ------------------------------------------ criterion 6: hierarchy rules ----

bool criterion_hierarchy_rules(std::string& detail) {
    const auto& tr = tree_run();
    std::set<int> epochs;
    for (const auto& r : tr.log.rows) epochs.insert(r.epoch);

    size_t checked = 0, violations = 0;
    auto audit = [&](const std::string& parent_task, const std::string& child_task,
                     const std::vector<int>& parent_map) {
        for (int epoch : epochs) {
            auto parents = class_rows_at(tr.log, epoch, parent_task);
            auto children = class_rows_at(tr.log, epoch, child_task);
            for (const auto& [sid, child] : children) {
                auto it = parents.find(sid);
                if (it == parents.end()) continue;
                bool parent_ok = it->second.first == it->second.second;
                bool child_ok = child.first == child.second;
                bool in = parent_map.at(size_t(child.first)) == it->second.first;
                ++checked;
                if (parent_ok && child_ok && !in) ++violations;       // CC must be -in
                if (!parent_ok && child_ok && in) ++violations;       // FC must be -out
            }
        }
        // The library-side audit enforces the same rules via hard errors.
        hierarchy_adherence(tr.log, parent_map, parent_task, child_task);
    };
    audit("l2", "l3", std::vector<int>(tr.ledger.parent_32.begin(), tr.ledger.parent_32.end()));
    audit("l1", "l2", std::vector<int>(tr.ledger.parent_21.begin(), tr.ledger.parent_21.end()));
    detail = fmt("%zu logged (parent, child) predictions, %zu rule violations vs 0", checked,
                 violations);
    return violations == 0 && checked > 0;
}

// --------------------------------------- criterion 7: partition identities ----

bool criterion_partition_identities(std::string& detail) {
    const auto& tr = tree_run();
    double worst = 0;

    // Combo counts must partition the evaluated samples at every epoch.
    auto tl = combo_timeline(tr.log, "l2", "l3");
    size_t count_mismatches = 0;
    for (size_t i = 0; i < tl.epochs.size(); ++i) {
        auto l2 = class_rows_at(tr.log, tl.epochs[i], "l2");
        auto l3 = class_rows_at(tr.log, tl.epochs[i], "l3");
        size_t eval_size = 0;
        for (const auto& [sid, _] : l3) eval_size += l2.count(sid);
        size_t sum = tl.counts[i][0] + tl.counts[i][1] + tl.counts[i][2] + tl.counts[i][3];
        if (sum != eval_size) ++count_mismatches;
    }

    // Transition ratios are a distribution over the four cells.
    auto trep = transition_tracking(tr.log, "l2", "l3", 0, Combo::FF);
    for (const auto& ratios : trep.ratios) {
        double s = ratios[0] + ratios[1] + ratios[2] + ratios[3];
        worst = std::max(worst, std::fabs(s - 1.0));
    }

    // Cell-weighted means recombine into the global mean. The cell metric is
    // plain absolute error, so the direct pass reads the raw payload values.
    auto combo_metric = metric_by_combo(tr.log, "age", "l2", "l3");
    std::map<std::pair<int, int64_t>, double> age_abs;
    for (const auto& r : tr.log.rows)
        if (r.task == "age") {
            auto p = parse_payload(r.pred);
            auto t = parse_payload(r.target);
            age_abs[{r.epoch, r.sample_id}] = std::fabs(p.values.at(0) - t.values.at(0));
        }
    for (const auto& row : combo_metric.rows) {
        double weighted = 0;
        size_t n = 0;
        for (int c = 0; c < 4; ++c) {
            weighted += row.mean[size_t(c)] * double(row.count[size_t(c)]);
            n += row.count[size_t(c)];
        }
        auto l2 = class_rows_at(tr.log, row.epoch, "l2");
        auto l3 = class_rows_at(tr.log, row.epoch, "l3");
        double direct = 0;
        size_t dn = 0;
        for (const auto& [key, e] : age_abs)
            if (key.first == row.epoch && l2.count(key.second) && l3.count(key.second)) {
                direct += e;
                ++dn;
            }
        if (n != dn) ++count_mismatches;
        if (n > 0) worst = std::max(worst, std::fabs(weighted / double(n) - direct / double(dn)));
    }

    // Group-weighted means recombine into the global mean.
    std::map<int, std::vector<GroupRow>> by_epoch;
    for (const auto& row : per_group_aggregate(tr.log, "l3", "l2")) by_epoch[row.epoch].push_back(row);
    for (const auto& [epoch, rows] : by_epoch) {
        double err_sum = 0, acc_sum = 0;
        size_t n = 0;
        for (const auto& g : rows) {
            err_sum += g.main_error * double(g.n);
            acc_sum += g.aux_accuracy * double(g.n);
            n += g.n;
        }
        auto l3_err = task_errors_at(tr.log, epoch, "l3");
        auto l2_err = task_errors_at(tr.log, epoch, "l2");
        double direct_err = 0, direct_acc = 0;
        size_t dn = 0;
        for (const auto& [sid, e] : l3_err) {
            auto it = l2_err.find(sid);
            if (it == l2_err.end()) continue;
            direct_err += e;
            direct_acc += 1.0 - it->second;
            ++dn;
        }
        if (n != dn) ++count_mismatches;
        worst = std::max(worst, std::fabs(err_sum / double(n) - direct_err / double(dn)));
        worst = std::max(worst, std::fabs(acc_sum / double(n) - direct_acc / double(dn)));
    }

    detail = fmt("%zu count mismatches vs 0, worst identity residual %.2e vs 1e-12",
                 count_mismatches, worst);
    return count_mismatches == 0 && worst <= 1e-12;
}

// --------------------------------------- criterion 8: segmentation smoke ----

bool criterion_segmentation(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    PatchDatasetParams params;
    params.n_regions = 24;
    params.patches_per_region = 8;
    params.height = 32;
    params.width = 32;
    params.seed = 81;
    auto data = gen_patch_dataset(params).first;

    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 16;
    tc.lr = 1e-3;
    tc.seed = 81;
    ModalityRoleConfig roles;
    roles.roles = {{"sar", Role::input},
                   {"optical", Role::input},
                   {"lulc", Role::target},
                   {"elevation", Role::target}};
    roles.main_task = "lulc";
    auto run = run_training(data, roles, {}, tc, fresh_dir("c8_unet"));

    double acc = metric_at(run.result.metrics, run.result.best_epoch, "test", "lulc", "accuracy");
    double mae1 = metric_at(run.result.metrics, 1, "test", "elevation", "mae");
    double mae_final = metric_at(run.result.metrics, tc.epochs, "test", "elevation", "mae");
    double t = seconds_since(t0);
    detail = fmt("lulc accuracy %.4f vs 0.85, elevation mae epoch1 %.4f -> final %.4f "
                 "(need < %.4f), %.0fs vs 900s",
                 acc, mae1, mae_final, mae1 / 2, t);
    return acc >= 0.85 && mae_final < mae1 / 2 && t < 900.0;
}

// --------------------------------------------- criterion 9: determinism ----

bool criterion_determinism(std::string& detail) {
    auto pipeline = [&](const std::string& tag) {
        ExperimentConfig cfg;
        cfg.name = "det";
        cfg.seed = 91;
        cfg.train.seed = 91;
        cfg.dataset.kind = "pixel";
        cfg.dataset.pixel.n_fields = 12;
        cfg.dataset.pixel.pixels_per_field = 2;
        cfg.dataset.pixel.season_len = 4;
        cfg.dataset.pixel.seed = 91;
        cfg.roles.roles = {{"satellite", Role::input},
                           {"crop", Role::target},
                           {"yield", Role::target}};
        cfg.roles.main_task = "yield";
        cfg.train.epochs = 2;
        cfg.train.batch_size = 16;

        auto data_dir = fresh_dir("c9_data_" + tag);
        cmd_generate(cfg, data_dir);
        cfg.dataset.kind.clear();
        cfg.dataset.path = data_dir;
        auto run_dir = fresh_dir("c9_run_" + tag);
        cmd_train(cfg, run_dir);

        std::vector<std::string> files;
        for (const char* f : {"manifest.json", "samples.csv", "satellite.bin", "crop.bin",
                              "yield.bin"})
            files.push_back(data_dir + "/" + f);
        files.push_back(run_dir + "/metrics.csv");
        files.push_back(run_dir + "/predictions.csv");
        files.push_back(run_dir + "/splits.csv");

        AnalyzeRequest corr;
        corr.run_dir = run_dir;
        corr.analysis = "correlation";
        corr.permutations = 500;
        corr.subset_fraction = 1.0;
        for (const auto& f : cmd_analyze(corr)) files.push_back(f);
        AnalyzeRequest groups;
        groups.run_dir = run_dir;
        groups.analysis = "groups";
        groups.aux_task = "crop";
        for (const auto& f : cmd_analyze(groups)) files.push_back(f);
        return files;
    };

    auto a = pipeline("a");
    auto b = pipeline("b");
    size_t diff = 0;
    for (size_t i = 0; i < a.size(); ++i)
        if (slurp(a[i]) != slurp(b[i])) ++diff;
    detail = fmt("%zu artifacts compared across two generate->train->analyze pipelines, "
                 "%zu differ vs 0",
                 a.size(), diff);
    return diff == 0;
}

// ------------------------------------------ criterion 10: combo dynamics ----

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<size_t> idx(v.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        size_t i = 0;
        while (i < idx.size()) {
            size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            double avg = (double(i) + double(j)) / 2.0 + 1.0;  // average rank of the tie run
            for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    return naive_pearson(ranks(a), ranks(b));
}

bool criterion_combo_dynamics(std::string& detail) {
    const auto& tr = tree_run();
    int best = tr.run.result.best_epoch;

    auto tl = combo_timeline(tr.log, "l2", "l3");
    std::vector<double> epochs, cc;
    for (size_t i = 0; i < tl.epochs.size(); ++i)
        if (tl.epochs[i] >= 1 && tl.epochs[i] <= best) {
            epochs.push_back(double(tl.epochs[i]));
            cc.push_back(double(tl.counts[i][0]));
        }
    if (epochs.size() < 3) {
        detail = fmt("only %zu epochs in 1..best (best %d); too short for a trend", epochs.size(),
                     best);
        return false;
    }
    double rho = spearman(epochs, cc);

    // Cohorts by the pre-training (epoch 0) combination.
    auto l2_0 = class_rows_at(tr.log, 0, "l2");
    auto l3_0 = class_rows_at(tr.log, 0, "l3");
    int final_epoch = tl.epochs.back();
    auto l2_f = class_rows_at(tr.log, final_epoch, "l2");
    auto l3_f = class_rows_at(tr.log, final_epoch, "l3");
    size_t ff_n = 0, ff_cc = 0, half_n = 0, half_cc = 0;
    for (const auto& [sid, c3] : l3_0) {
        auto it2 = l2_0.find(sid);
        if (it2 == l2_0.end()) continue;
        bool aux0 = it2->second.first == it2->second.second;
        bool main0 = c3.first == c3.second;
        bool cc_final = l2_f.at(sid).first == l2_f.at(sid).second &&
                        l3_f.at(sid).first == l3_f.at(sid).second;
        if (!aux0 && !main0) {
            ++ff_n;
            ff_cc += cc_final;
        } else if (aux0 != main0) {
            ++half_n;
            half_cc += cc_final;
        }
    }
    require(ff_n > 0 && half_n > 0, ErrorCode::analyze, "empty epoch-0 cohort");
    double ff_ratio = double(ff_cc) / double(ff_n);
    double half_ratio = double(half_cc) / double(half_n);
    detail = fmt("spearman(epoch, CC) %.3f vs > 0 over epochs 1..%d; final CC ratio: "
                 "FF cohort %.3f (n=%zu) vs CF+FC cohort %.3f (n=%zu)",
                 rho, best, ff_ratio, ff_n, half_ratio, half_n);
    return rho > 0 && ff_ratio > half_ratio;
}

// -------------------------------------------------------------- driver ----

struct Criterion {
    int number;
    const char* name;
    std::function<bool(std::string&)> run;
};

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string tok;
            while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
        }
    }

    std::vector<Criterion> criteria = {
        {1, "gradient checks", criterion_gradients},
        {2, "metric oracles", criterion_metric_oracles},
        {3, "weight normalization", criterion_weight_normalization},
        {4, "role shift parity", criterion_role_shift},
        {5, "planted coupling recovery", criterion_planted_coupling},
        {6, "hierarchy hard rules", criterion_hierarchy_rules},
        {7, "partition identities", criterion_partition_identities},
        {8, "segmentation smoke", criterion_segmentation},
        {9, "pipeline determinism", criterion_determinism},
        {10, "combo dynamics", criterion_combo_dynamics},
    };

    int failures = 0;
    for (auto& c : criteria) {
        if (!only.empty() && !only.count(c.number)) continue;
        std::string detail;
        bool pass = false;
        try {
            pass = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %2d. %s: %s\n", pass ? "PASS" : "FAIL", c.number, c.name,
                    detail.c_str());
        std::fflush(stdout);
        failures += !pass;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures;
}

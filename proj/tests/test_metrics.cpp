// Metric implementations against independently written naive references.
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mtx/error.hpp"
#include "mtx/metrics.hpp"
#include "mtx/rng.hpp"

namespace {

// References take a deliberately different route from the library versions:
// r2 via variance identity, f1 via an explicit confusion matrix, iou via
// per-class full scans.

double ref_r2(const std::vector<double>& p, const std::vector<double>& t) {
    double n = double(t.size());
    double sum = 0, sumsq = 0, mse = 0;
    for (size_t i = 0; i < t.size(); ++i) {
        sum += t[i];
        sumsq += t[i] * t[i];
        double d = p[i] - t[i];
        mse += d * d;
    }
    double var = sumsq / n - (sum / n) * (sum / n);
    return 1.0 - (mse / n) / var;
}

double ref_mae(const std::vector<double>& p, const std::vector<double>& t) {
    double s = 0;
    for (size_t i = 0; i < t.size(); ++i) s += p[i] > t[i] ? p[i] - t[i] : t[i] - p[i];
    return s / double(t.size());
}

double ref_accuracy(const std::vector<int>& p, const std::vector<int>& t) {
    size_t bad = 0;
    for (size_t i = 0; i < t.size(); ++i) bad += p[i] != t[i];
    return 1.0 - double(bad) / double(t.size());
}

double ref_micro_f1(const std::vector<int>& p, const std::vector<int>& t, int K) {
    std::vector<std::vector<double>> cm(size_t(K), std::vector<double>(size_t(K), 0));
    for (size_t i = 0; i < t.size(); ++i) cm[size_t(t[i])][size_t(p[i])] += 1;
    double tp = 0, tp_fp = 0, tp_fn = 0;
    for (int c = 0; c < K; ++c) {
        tp += cm[size_t(c)][size_t(c)];
        for (int d = 0; d < K; ++d) {
            tp_fp += cm[size_t(d)][size_t(c)];  // predicted c
            tp_fn += cm[size_t(c)][size_t(d)];  // labelled c
        }
    }
    double precision = tp / tp_fp, recall = tp / tp_fn;
    return 2 * precision * recall / (precision + recall);
}

double ref_mean_iou(const std::vector<int>& p, const std::vector<int>& t, int K) {
    double acc = 0;
    int classes = 0;
    for (int c = 0; c < K; ++c) {
        double inter = 0, uni = 0;
        for (size_t i = 0; i < t.size(); ++i) {
            bool pc = p[i] == c, tc = t[i] == c;
            inter += pc && tc;
            uni += pc || tc;
        }
        if (uni > 0) {
            acc += inter / uni;
            ++classes;
        }
    }
    return acc / classes;
}

} // namespace

TEST_CASE("r squared fixed points") {
    std::vector<double> t = {1, 2, 3, 4};
    CHECK(mtx::metric_r_squared(t, t) == 1.0);
    std::vector<double> mean(4, 2.5);
    CHECK(mtx::metric_r_squared(mean, t) == 0.0);
    CHECK_THROWS_AS(mtx::metric_r_squared(t, std::vector<double>(4, 7.0)), mtx::Error);
}

TEST_CASE("mean iou worked example") {
    // pred [[0,1],[1,1]] vs target [[0,1],[0,1]]: class0 1/2, class1 2/3
    std::vector<int> p = {0, 1, 1, 1}, t = {0, 1, 0, 1};
    CHECK(mtx::metric_mean_iou(p, t, 2) == doctest::Approx(7.0 / 12.0).epsilon(1e-15));
}

TEST_CASE("micro f1 equals accuracy for single-label classification") {
    mtx::Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        int K = 2 + int(rng.below(10));
        size_t n = 5 + rng.below(200);
        std::vector<int> p(n), t(n);
        for (size_t i = 0; i < n; ++i) {
            p[i] = int(rng.below(uint64_t(K)));
            t[i] = int(rng.below(uint64_t(K)));
        }
        double f1 = mtx::metric_micro_f1(p, t, K);
        double acc = mtx::metric_accuracy(p, t, K);
        CHECK(std::fabs(f1 - acc) <= 1e-12);
    }
}

TEST_CASE("metrics agree with naive references on 100 random instances") {
    mtx::Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        size_t n = 10 + rng.below(300);

        std::vector<double> pr(n), tr(n);
        for (size_t i = 0; i < n; ++i) {
            tr[i] = rng.normal(4.0, 2.0);
            pr[i] = tr[i] + rng.normal(0.0, 0.7);
        }
        CHECK(std::fabs(mtx::metric_r_squared(pr, tr) - ref_r2(pr, tr)) <= 1e-10);
        CHECK(std::fabs(mtx::metric_mae(pr, tr) - ref_mae(pr, tr)) <= 1e-10);

        int K = 2 + int(rng.below(12));
        std::vector<int> pc(n), tc(n);
        for (size_t i = 0; i < n; ++i) {
            tc[i] = int(rng.below(uint64_t(K)));
            pc[i] = rng.uniform() < 0.7 ? tc[i] : int(rng.below(uint64_t(K)));
        }
        CHECK(std::fabs(mtx::metric_accuracy(pc, tc, K) - ref_accuracy(pc, tc)) <= 1e-10);
        CHECK(std::fabs(mtx::metric_micro_f1(pc, tc, K) - ref_micro_f1(pc, tc, K)) <= 1e-10);
        CHECK(std::fabs(mtx::metric_mean_iou(pc, tc, K) - ref_mean_iou(pc, tc, K)) <= 1e-10);
    }
}

TEST_CASE("class ids outside the configured range are rejected") {
    std::vector<int> ok = {0, 1}, bad = {0, 5};
    CHECK_THROWS_AS(mtx::metric_accuracy(bad, ok, 2), mtx::Error);
    CHECK_THROWS_AS(mtx::metric_mean_iou(ok, bad, 2), mtx::Error);
    CHECK_THROWS_AS(mtx::metric_micro_f1(std::vector<int>{-1, 0}, ok, 2), mtx::Error);
}

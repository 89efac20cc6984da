// SPDX-License-Identifier: Apache-2.0
#include "mtx/metrics.hpp"

#include <cmath>
#include <string>

#include "mtx/error.hpp"

namespace mtx {

namespace {

void check_lengths(size_t a, size_t b) {
    require(a == b, ErrorCode::shape,
            "metric: prediction/target length mismatch (" + std::to_string(a) + " vs " +
                std::to_string(b) + ")");
    require(a > 0, ErrorCode::shape, "metric: empty input");
}

void check_classes(const std::vector<int>& v, int num_classes) {
    require(num_classes >= 2, ErrorCode::shape, "metric: need at least 2 classes");
    for (int c : v)
        require(c >= 0 && c < num_classes, ErrorCode::data,
                "metric: class id " + std::to_string(c) + " outside [0, " +
                    std::to_string(num_classes) + ")");
}

} // namespace

double metric_r_squared(const std::vector<double>& pred, const std::vector<double>& target) {
    check_lengths(pred.size(), target.size());
    double mean = 0;
    for (double t : target) mean += t;
    mean /= double(target.size());
    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double r = target[i] - pred[i];
        double d = target[i] - mean;
        ss_res += r * r;
        ss_tot += d * d;
    }
    require(ss_tot > 0, ErrorCode::data, "metric_r_squared: constant target");
    return 1.0 - ss_res / ss_tot;
}

double metric_mae(const std::vector<double>& pred, const std::vector<double>& target) {
    check_lengths(pred.size(), target.size());
    double s = 0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
    return s / double(pred.size());
}

double metric_accuracy(const std::vector<int>& pred, const std::vector<int>& target,
                       int num_classes) {
    check_lengths(pred.size(), target.size());
    check_classes(pred, num_classes);
    check_classes(target, num_classes);
    size_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) hit += pred[i] == target[i];
    return double(hit) / double(pred.size());
}

double metric_micro_f1(const std::vector<int>& pred, const std::vector<int>& target,
                       int num_classes) {
    check_lengths(pred.size(), target.size());
    check_classes(pred, num_classes);
    check_classes(target, num_classes);
    // pooled counts over classes: tp_c summed, fp_c summed, fn_c summed
    double tp = 0, fp = 0, fn = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (size_t i = 0; i < pred.size(); ++i) {
            bool p = pred[i] == c, t = target[i] == c;
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
        }
    }
    require(2 * tp + fp + fn > 0, ErrorCode::data, "metric_micro_f1: no labelled positions");
    return 2 * tp / (2 * tp + fp + fn);
}

double metric_mean_iou(const std::vector<int>& pred, const std::vector<int>& target,
                       int num_classes) {
    check_lengths(pred.size(), target.size());
    check_classes(pred, num_classes);
    check_classes(target, num_classes);
    std::vector<double> inter(size_t(num_classes), 0), uni(size_t(num_classes), 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == target[i]) {
            inter[size_t(pred[i])] += 1;
            uni[size_t(pred[i])] += 1;
        } else {
            uni[size_t(pred[i])] += 1;
            uni[size_t(target[i])] += 1;
        }
    }
    double sum = 0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (uni[size_t(c)] > 0) {
            sum += inter[size_t(c)] / uni[size_t(c)];
            ++present;
        }
    }
    require(present > 0, ErrorCode::data, "metric_mean_iou: no classes present");
    return sum / double(present);
}

} // namespace mtx

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace mtx {

// Evaluation metrics over flat prediction/target arrays. Class-valued inputs
// are validated against [0, num_classes). All of these are pure functions.

// Coefficient of determination. Errors if the target is constant.
double metric_r_squared(const std::vector<double>& pred, const std::vector<double>& target);

double metric_mae(const std::vector<double>& pred, const std::vector<double>& target);

double metric_accuracy(const std::vector<int>& pred, const std::vector<int>& target,
                       int num_classes);

// Micro-averaged F1 from pooled per-class counts. Equal to accuracy for
// single-label classification; kept as its own computation path on purpose.
double metric_micro_f1(const std::vector<int>& pred, const std::vector<int>& target,
                       int num_classes);

// Per-class IoU averaged over the classes whose union is non-empty.
double metric_mean_iou(const std::vector<int>& pred, const std::vector<int>& target,
                       int num_classes);

} // namespace mtx

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtx/error.hpp"

namespace mtx {

// Per-epoch, per-sample, per-task prediction record. Payload grammar (no
// commas, so rows stay naively comma-splittable):
//   regression           r:<v>|<v>|...            values as %.9g
//   classification       c:<idx>  or  c:<idx>|m:<margin>
//   class map            M:<H>x<W>:<id>|<id>*<run>|...
//   dense map            D:<H>x<W>:<q>|<q>*<run>|...   q quantized to 3 decimals
// Run-length suffix *<run> is present only for runs of length >= 2.

struct PredRow {
    int epoch = 0;
    int64_t sample_id = 0;
    int64_t group_id = 0;
    std::string task;
    std::string pred;
    std::string target;
};

struct PredictionLog {
    std::vector<PredRow> rows;

    void save(const std::string& path) const;
    static PredictionLog load(const std::string& path);
};

std::string payload_regression(const float* v, size_t n);
std::string payload_class(int idx);
std::string payload_class(int idx, double margin);
std::string payload_class_map(const int* ids, size_t h, size_t w);
std::string payload_dense_map(const float* v, size_t h, size_t w);

enum class PayloadKind { regression, classification, class_map, dense_map };

struct Payload {
    PayloadKind kind;
    std::vector<double> values; // regression values or dense map cells
    std::vector<int> ids;       // class index (single) or class map cells
    double margin = 0;          // classification only; 0 when absent
    size_t h = 0, w = 0;        // maps only
};

Payload parse_payload(const std::string& s);

} // namespace mtx

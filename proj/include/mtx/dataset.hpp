// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtx/error.hpp"
#include "mtx/layers.hpp"

namespace mtx {

// How a modality is encoded when it serves as model input.
enum class ModalityKind {
    timeseries,    // [T x F] series with per-step timestamps
    tabular,       // flat feature vector
    categorical,   // single class id
    image_spatial, // [C x H x W], convolutional encoders
    image_flat,    // [C x H x W], flattened into an MLP
    class_map,     // [H x W] class ids (target-only)
    dense_map,     // [C x H x W] values, usually in [0, 1]
};

// What predicting a modality means when it serves as a target.
enum class TaskKind {
    none, // modality cannot be a prediction target
    regression,
    bounded_regression,
    classification,
    multiclass_seg,
    dense_seg,
};

const char* modality_kind_name(ModalityKind k);
const char* task_kind_name(TaskKind k);

struct ModalitySpec {
    std::string name;
    ModalityKind kind = ModalityKind::tabular;
    TaskKind target_kind = TaskKind::none;
    size_t features = 0;              // timeseries / tabular feature count
    size_t max_len = 0;               // timeseries step capacity
    size_t classes = 0;               // categorical / class_map class count
    size_t channels = 0, height = 0, width = 0; // image kinds
    bool imagery = false;             // remote-sensing input; may never shift role

    // Stored floats per sample (0 for id-carried kinds).
    size_t value_stride() const;
    // Stored class ids per sample (0 for value-carried kinds).
    size_t id_stride() const;
};

struct ModalityColumn {
    ModalitySpec spec;
    std::vector<float> values;       // sample-major, fixed stride
    std::vector<int> ids;            // categorical / class_map payloads
    std::vector<double> timestamps;  // timeseries, stride max_len
    std::vector<size_t> lengths;     // timeseries valid step counts
};

struct Dataset {
    std::string kind; // generator family, e.g. "pixel"
    std::vector<ModalityColumn> columns;
    std::vector<int64_t> sample_ids;
    std::vector<int64_t> group_ids;  // split unit (field / region / stand)
    std::vector<int64_t> strata;     // stratification key (year / climate)

    size_t size() const { return sample_ids.size(); }
    bool has(const std::string& name) const;
    const ModalityColumn& column(const std::string& name) const;
    ModalityColumn& column(const std::string& name);

    // Checks stride consistency of every column against sample count.
    void validate() const;
};

// One training/eval batch: per-modality tensors shaped for the encoders, ids
// for categorical payloads. Only requested modalities are materialized.
struct Batch {
    size_t count = 0;
    std::vector<size_t> idx; // dataset row of each batch slot
    std::vector<std::pair<std::string, RealTensor>> numeric;
    std::vector<std::pair<std::string, std::vector<int>>> classes;
    std::vector<std::pair<std::string, std::vector<double>>> times;
    std::vector<std::pair<std::string, std::vector<size_t>>> lens;

    const RealTensor& tensor(const std::string& name) const;
    const std::vector<int>& class_ids(const std::string& name) const;
    const std::vector<double>& timestamps(const std::string& name) const;
    const std::vector<size_t>& lengths(const std::string& name) const;
};

Batch make_batch(const Dataset& d, const std::vector<size_t>& indices,
                 const std::vector<std::string>& modalities);

} // namespace mtx

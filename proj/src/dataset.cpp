// SPDX-License-Identifier: Apache-2.0
#include "mtx/dataset.hpp"

#include <algorithm>

namespace mtx {

const char* modality_kind_name(ModalityKind k) {
    switch (k) {
        case ModalityKind::timeseries: return "timeseries";
        case ModalityKind::tabular: return "tabular";
        case ModalityKind::categorical: return "categorical";
        case ModalityKind::image_spatial: return "image_spatial";
        case ModalityKind::image_flat: return "image_flat";
        case ModalityKind::class_map: return "class_map";
        case ModalityKind::dense_map: return "dense_map";
    }
    return "?";
}

const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::none: return "none";
        case TaskKind::regression: return "regression";
        case TaskKind::bounded_regression: return "bounded_regression";
        case TaskKind::classification: return "classification";
        case TaskKind::multiclass_seg: return "multiclass_seg";
        case TaskKind::dense_seg: return "dense_seg";
    }
    return "?";
}

size_t ModalitySpec::value_stride() const {
    switch (kind) {
        case ModalityKind::timeseries: return max_len * features;
        case ModalityKind::tabular: return features;
        case ModalityKind::categorical: return 0;
        case ModalityKind::image_spatial:
        case ModalityKind::image_flat:
        case ModalityKind::dense_map: return channels * height * width;
        case ModalityKind::class_map: return 0;
    }
    return 0;
}

size_t ModalitySpec::id_stride() const {
    switch (kind) {
        case ModalityKind::categorical: return 1;
        case ModalityKind::class_map: return height * width;
        default: return 0;
    }
}

bool Dataset::has(const std::string& name) const {
    for (const auto& c : columns)
        if (c.spec.name == name) return true;
    return false;
}

const ModalityColumn& Dataset::column(const std::string& name) const {
    for (const auto& c : columns)
        if (c.spec.name == name) return c;
    fail(ErrorCode::data, "no modality named '" + name + "' in dataset");
}

ModalityColumn& Dataset::column(const std::string& name) {
    for (auto& c : columns)
        if (c.spec.name == name) return c;
    fail(ErrorCode::data, "no modality named '" + name + "' in dataset");
}

void Dataset::validate() const {
    size_t n = size();
    require(group_ids.size() == n && strata.size() == n, ErrorCode::data,
            "group/stratum ids must cover every sample");
    for (const auto& c : columns) {
        const auto& s = c.spec;
        require(!s.name.empty(), ErrorCode::data, "modality with empty name");
        require(c.values.size() == n * s.value_stride(), ErrorCode::data,
                "modality '" + s.name + "': value storage does not match sample count");
        require(c.ids.size() == n * s.id_stride(), ErrorCode::data,
                "modality '" + s.name + "': id storage does not match sample count");
        if (s.kind == ModalityKind::timeseries) {
            require(c.timestamps.size() == n * s.max_len, ErrorCode::data,
                    "modality '" + s.name + "': timestamp storage does not match");
            require(c.lengths.size() == n, ErrorCode::data,
                    "modality '" + s.name + "': lengths must cover every sample");
            for (size_t l : c.lengths)
                require(l >= 1 && l <= s.max_len, ErrorCode::data,
                        "modality '" + s.name + "': step count out of range");
        } else {
            require(c.timestamps.empty() && c.lengths.empty(), ErrorCode::data,
                    "modality '" + s.name + "': unexpected timeseries fields");
        }
        size_t limit = s.kind == ModalityKind::categorical ? s.classes
                       : s.kind == ModalityKind::class_map ? s.classes
                                                           : 0;
        for (int id : c.ids)
            require(id >= 0 && size_t(id) < limit, ErrorCode::data,
                    "modality '" + s.name + "': class id out of range");
    }
}

const RealTensor& Batch::tensor(const std::string& name) const {
    for (const auto& [k, v] : numeric)
        if (k == name) return v;
    fail(ErrorCode::data, "batch has no tensor for modality '" + name + "'");
}

const std::vector<int>& Batch::class_ids(const std::string& name) const {
    for (const auto& [k, v] : classes)
        if (k == name) return v;
    fail(ErrorCode::data, "batch has no class ids for modality '" + name + "'");
}

const std::vector<double>& Batch::timestamps(const std::string& name) const {
    for (const auto& [k, v] : times)
        if (k == name) return v;
    fail(ErrorCode::data, "batch has no timestamps for modality '" + name + "'");
}

const std::vector<size_t>& Batch::lengths(const std::string& name) const {
    for (const auto& [k, v] : lens)
        if (k == name) return v;
    fail(ErrorCode::data, "batch has no lengths for modality '" + name + "'");
}

Batch make_batch(const Dataset& d, const std::vector<size_t>& indices,
                 const std::vector<std::string>& modalities) {
    require(!indices.empty(), ErrorCode::data, "empty batch");
    for (size_t i : indices)
        require(i < d.size(), ErrorCode::data, "batch index out of range");

    Batch b;
    b.count = indices.size();
    b.idx = indices;
    for (const auto& name : modalities) {
        const auto& col = d.column(name);
        const auto& s = col.spec;
        size_t vs = s.value_stride(), is = s.id_stride();
        if (vs > 0) {
            std::vector<real> v(indices.size() * vs);
            for (size_t r = 0; r < indices.size(); ++r)
                std::copy_n(col.values.begin() + long(indices[r] * vs), vs,
                            v.begin() + long(r * vs));
            Shape shape;
            switch (s.kind) {
                case ModalityKind::timeseries:
                    shape = {b.count, s.max_len, s.features};
                    break;
                case ModalityKind::tabular: shape = {b.count, s.features}; break;
                case ModalityKind::image_flat:
                    shape = {b.count, s.channels * s.height * s.width};
                    break;
                default: shape = {b.count, s.channels, s.height, s.width}; break;
            }
            b.numeric.emplace_back(name, RealTensor::from_data(std::move(shape), std::move(v)));
        }
        if (is > 0) {
            std::vector<int> v(indices.size() * is);
            for (size_t r = 0; r < indices.size(); ++r)
                std::copy_n(col.ids.begin() + long(indices[r] * is), is, v.begin() + long(r * is));
            b.classes.emplace_back(name, std::move(v));
        }
        if (s.kind == ModalityKind::timeseries) {
            std::vector<double> ts(indices.size() * s.max_len);
            std::vector<size_t> ln(indices.size());
            for (size_t r = 0; r < indices.size(); ++r) {
                std::copy_n(col.timestamps.begin() + long(indices[r] * s.max_len), s.max_len,
                            ts.begin() + long(r * s.max_len));
                ln[r] = col.lengths[indices[r]];
            }
            b.times.emplace_back(name, std::move(ts));
            b.lens.emplace_back(name, std::move(ln));
        }
    }
    return b;
}

} // namespace mtx

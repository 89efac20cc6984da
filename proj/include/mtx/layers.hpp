// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtx/ops.hpp"
#include "mtx/optimizer.hpp"
#include "mtx/rng.hpp"
#include "mtx/tensor.hpp"

namespace mtx {

using real = float;
using RealTensor = Tensor<real>;

struct NamedParam {
    std::string name;
    RealTensor tensor;
};

using ParamList = std::vector<NamedParam>;

inline std::vector<RealTensor> param_tensors(ParamList& params) {
    std::vector<RealTensor> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(p.tensor);
    return out;
}

// Glorot-uniform initialization keeps activations in range for both the
// narrow MLPs and the conv stacks used here.
inline RealTensor glorot(Shape shape, size_t fan_in, size_t fan_out, Rng& rng) {
    double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    std::vector<real> v(shape_numel(shape));
    for (auto& x : v) x = real(rng.uniform(-limit, limit));
    return RealTensor::from_data(std::move(shape), std::move(v), true);
}

struct Linear {
    RealTensor w, b;

    Linear() = default;
    Linear(size_t in, size_t out, Rng& rng)
        : w(glorot({in, out}, in, out, rng)), b(RealTensor::zeros({out}, true)) {}

    RealTensor forward(const RealTensor& x) const { return add_bias(matmul(x, w), b); }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

struct Conv {
    RealTensor k, b;
    size_t stride = 1, pad = 0;

    Conv() = default;
    Conv(size_t cin, size_t cout, size_t ksize, size_t stride_, size_t pad_, Rng& rng)
        : k(glorot({cout, cin, ksize, ksize}, cin * ksize * ksize, cout * ksize * ksize, rng)),
          b(RealTensor::zeros({cout}, true)),
          stride(stride_),
          pad(pad_) {}

    RealTensor forward(const RealTensor& x) const {
        return add_channel_bias(conv2d(x, k, stride, pad), b);
    }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".k", k});
        out.push_back({prefix + ".b", b});
    }
};

struct LayerNormAffine {
    RealTensor gamma, beta;

    LayerNormAffine() = default;
    explicit LayerNormAffine(size_t f)
        : gamma(RealTensor::full({f}, real(1), true)), beta(RealTensor::zeros({f}, true)) {}

    RealTensor forward(const RealTensor& x) const { return layer_norm(x, gamma, beta); }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

struct BatchNorm {
    RealTensor gamma, beta;
    std::shared_ptr<BatchNormState<real>> state;

    BatchNorm() = default;
    explicit BatchNorm(size_t f)
        : gamma(RealTensor::full({f}, real(1), true)),
          beta(RealTensor::zeros({f}, true)),
          state(std::make_shared<BatchNormState<real>>(f)) {}

    RealTensor forward(const RealTensor& x, bool training) const {
        return batchnorm1d(x, gamma, beta, *state, training);
    }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

struct Embedding {
    RealTensor table;

    Embedding() = default;
    Embedding(size_t classes, size_t dim, Rng& rng) {
        std::vector<real> v(classes * dim);
        for (auto& x : v) x = real(rng.normal(0.0, 0.1));
        table = RealTensor::from_data({classes, dim}, std::move(v), true);
    }

    RealTensor forward(const std::vector<int>& ids) const { return embedding(table, ids); }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".table", table});
    }
};

} // namespace mtx

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <variant>
#include <vector>

#include "mtx/layers.hpp"

namespace mtx {

// Task heads. Vector heads consume fused [N x D] latents, map heads consume
// fused [N x 64 x H x W] latents. Regression heads emit values, classification
// heads emit logits; losses live with the training loop.

struct LinearHead {
    Linear out;

    LinearHead() = default;
    LinearHead(size_t in, size_t dim, Rng& rng) : out(in, dim, rng) {}

    RealTensor forward(const RealTensor& x, bool, Rng&) { return out.forward(x); }

    void collect(const std::string& p, ParamList& o) { out.collect(p + ".out", o); }
};

// Two fully connected layers: the first batch-normalized with ReLU, the
// second projecting to the output width.
struct MlpBnHead {
    Linear f1, out;
    BatchNorm b1;

    MlpBnHead() = default;
    MlpBnHead(size_t in, size_t hidden, size_t dim, Rng& rng)
        : f1(in, hidden, rng), out(hidden, dim, rng), b1(hidden) {}

    RealTensor forward(const RealTensor& x, bool training, Rng&) {
        auto h = relu(b1.forward(f1.forward(x), training));
        return out.forward(h);
    }

    void collect(const std::string& p, ParamList& o) {
        f1.collect(p + ".f1", o);
        out.collect(p + ".out", o);
        b1.collect(p + ".b1", o);
    }
};

struct MlpDropoutHead {
    Linear f1, out;
    double drop_p = 0.2;

    MlpDropoutHead() = default;
    MlpDropoutHead(size_t in, size_t hidden, size_t dim, double drop, Rng& rng)
        : f1(in, hidden, rng), out(hidden, dim, rng), drop_p(drop) {}

    RealTensor forward(const RealTensor& x, bool training, Rng& rng) {
        return out.forward(dropout(relu(f1.forward(x)), drop_p, training, rng));
    }

    void collect(const std::string& p, ParamList& o) {
        f1.collect(p + ".f1", o);
        out.collect(p + ".out", o);
    }
};

// Per-cell class logits: one 1x1 projection.
struct SegmentationHead {
    Conv proj;

    SegmentationHead() = default;
    SegmentationHead(size_t in_channels, size_t classes, Rng& rng)
        : proj(in_channels, classes, 1, 1, 0, rng) {}

    RealTensor forward(const RealTensor& x, bool, Rng&) { return proj.forward(x); }

    void collect(const std::string& p, ParamList& o) { proj.collect(p + ".proj", o); }
};

// Per-cell regression into [0, 1]: two 3x3 refinements, 1x1 projection,
// sigmoid.
struct DenseMapHead {
    Conv c1, c2, proj;

    DenseMapHead() = default;
    DenseMapHead(size_t in_channels, Rng& rng)
        : c1(in_channels, 32, 3, 1, 1, rng), c2(32, 16, 3, 1, 1, rng),
          proj(16, 1, 1, 1, 0, rng) {}

    RealTensor forward(const RealTensor& x, bool, Rng&) {
        auto h = relu(c1.forward(x));
        h = relu(c2.forward(h));
        return sigmoid(proj.forward(h));
    }

    void collect(const std::string& p, ParamList& o) {
        c1.collect(p + ".c1", o);
        c2.collect(p + ".c2", o);
        proj.collect(p + ".proj", o);
    }
};

// Patch-level output from a map latent: 1x1 reduction to 16 channels, global
// average pool, then two fully connected layers with ReLU and dropout.
// Optional sigmoid squashes regression output to [0, 1].
struct MapVectorHead {
    Conv reduce;
    Linear f1, out;
    double drop_p = 0.2;
    bool squash = false;

    MapVectorHead() = default;
    MapVectorHead(size_t in_channels, size_t dim, double drop, bool squash_, Rng& rng)
        : reduce(in_channels, 16, 1, 1, 0, rng), f1(16, 64, rng), out(64, dim, rng),
          drop_p(drop), squash(squash_) {}

    RealTensor forward(const RealTensor& x, bool training, Rng& rng) {
        auto h = global_avg_pool(relu(reduce.forward(x)));
        h = dropout(relu(f1.forward(h)), drop_p, training, rng);
        auto y = out.forward(h);
        return squash ? sigmoid(y) : y;
    }

    void collect(const std::string& p, ParamList& o) {
        reduce.collect(p + ".reduce", o);
        f1.collect(p + ".f1", o);
        out.collect(p + ".out", o);
    }
};

using Head = std::variant<LinearHead, MlpBnHead, MlpDropoutHead, SegmentationHead, DenseMapHead,
                          MapVectorHead>;

inline RealTensor head_forward(Head& head, const RealTensor& x, bool training, Rng& rng) {
    return std::visit([&](auto& h) { return h.forward(x, training, rng); }, head);
}

inline void head_collect(Head& head, const std::string& prefix, ParamList& out) {
    std::visit([&](auto& h) { h.collect(prefix, out); }, head);
}

} // namespace mtx

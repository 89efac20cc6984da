// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mtx/layers.hpp"

namespace mtx {

// Per-modality encoders. Every encoder maps a batch of one modality to a
// shared latent space: vectors [N x D] or spatial maps [N x 64 x H x W].

// ---------------------------------------------------------------------------
// time series: transformer, single head, pre-LN, sinusoidal positions taken
// from the per-step timestamps, mean-pooled over valid steps
// ---------------------------------------------------------------------------

struct TransformerBlock {
    LayerNormAffine ln1, ln2;
    Linear wq, wk, wv, wo;
    Linear ff1, ff2;
    size_t dim = 0;

    TransformerBlock() = default;
    TransformerBlock(size_t d, size_t ff_dim, Rng& rng)
        : ln1(d),
          ln2(d),
          wq(d, d, rng),
          wk(d, d, rng),
          wv(d, d, rng),
          wo(d, d, rng),
          ff1(d, ff_dim, rng),
          ff2(ff_dim, d, rng),
          dim(d) {}

    // x [N x T x d]; mask [N x T x T] additive (0 valid, large negative for
    // padded key columns) or undefined when all steps are valid.
    RealTensor forward(const RealTensor& x, const RealTensor& mask) const {
        size_t N = x.shape()[0], T = x.shape()[1];
        auto flatten = [&](const RealTensor& t) { return reshape(t, {N * T, dim}); };
        auto unflatten = [&](const RealTensor& t) { return reshape(t, {N, T, dim}); };

        auto z = ln1.forward(x);
        auto zf = flatten(z);
        auto q = unflatten(wq.forward(zf));
        auto k = unflatten(wk.forward(zf));
        auto v = unflatten(wv.forward(zf));
        auto scores = mul_scalar(bmm(q, transpose_last2(k)), real(1.0 / std::sqrt(double(dim))));
        if (mask.defined()) scores = add(scores, mask);
        auto attn = softmax(scores, 2);
        auto ctx = bmm(attn, v);
        auto attended = unflatten(wo.forward(flatten(ctx)));
        auto h = add(x, attended);

        auto hf = flatten(ln2.forward(h));
        auto ff = ff2.forward(relu(ff1.forward(hf)));
        return add(h, unflatten(ff));
    }

    void collect(const std::string& p, ParamList& out) {
        ln1.collect(p + ".ln1", out);
        ln2.collect(p + ".ln2", out);
        wq.collect(p + ".wq", out);
        wk.collect(p + ".wk", out);
        wv.collect(p + ".wv", out);
        wo.collect(p + ".wo", out);
        ff1.collect(p + ".ff1", out);
        ff2.collect(p + ".ff2", out);
    }
};

struct TimeseriesEncoder {
    Linear in_proj;
    std::vector<TransformerBlock> blocks;
    LayerNormAffine final_ln;
    size_t features = 0, dim = 0;

    TimeseriesEncoder() = default;
    TimeseriesEncoder(size_t features_, size_t dim_, size_t layers, size_t ff_dim, Rng& rng)
        : in_proj(features_, dim_, rng), final_ln(dim_), features(features_), dim(dim_) {
        for (size_t i = 0; i < layers; ++i) blocks.emplace_back(dim_, ff_dim, rng);
    }

    // Interleaved sinusoidal encoding evaluated at the step's timestamp, so
    // timestamp 0 encodes to [0, 1, 0, 1, ...].
    std::vector<real> positional(const std::vector<double>& timestamps) const {
        std::vector<real> pe(timestamps.size() * dim);
        for (size_t t = 0; t < timestamps.size(); ++t)
            for (size_t i = 0; i < dim / 2; ++i) {
                double rate = std::pow(10000.0, -2.0 * double(i) / double(dim));
                pe[t * dim + 2 * i] = real(std::sin(timestamps[t] * rate));
                pe[t * dim + 2 * i + 1] = real(std::cos(timestamps[t] * rate));
            }
        return pe;
    }

    // x [N x T x F], timestamps row-major [N x T], lengths per sample (empty
    // means every step valid). Returns [N x dim].
    RealTensor forward(const RealTensor& x, const std::vector<double>& timestamps,
                       const std::vector<size_t>& lengths) const {
        require(x.rank() == 3, ErrorCode::shape, "timeseries encoder expects [N x T x F]");
        size_t N = x.shape()[0], T = x.shape()[1], F = x.shape()[2];
        require(F == features, ErrorCode::shape,
                "timeseries encoder built for " + std::to_string(features) + " features, got " +
                    std::to_string(F));
        require(timestamps.size() == N * T, ErrorCode::shape,
                "timestamps must cover every step");

        auto z = reshape(in_proj.forward(reshape(x, {N * T, F})), {N, T, dim});
        z = add(z, RealTensor::from_data({N, T, dim}, positional(timestamps)));

        RealTensor mask;
        if (!lengths.empty()) {
            require(lengths.size() == N, ErrorCode::shape, "lengths size mismatch");
            bool any_padded = false;
            for (size_t l : lengths) {
                require(l >= 1 && l <= T, ErrorCode::shape, "length out of range");
                any_padded |= l < T;
            }
            if (any_padded) {
                std::vector<real> m(N * T * T, real(0));
                for (size_t n = 0; n < N; ++n)
                    for (size_t r = 0; r < T; ++r)
                        for (size_t c = lengths[n]; c < T; ++c)
                            m[(n * T + r) * T + c] = real(-1e9);
                mask = RealTensor::from_data({N, T, T}, std::move(m));
            }
        }
        for (const auto& b : blocks) z = b.forward(z, mask);
        return seq_mean(final_ln.forward(z), lengths);
    }

    void collect(const std::string& p, ParamList& out) {
        in_proj.collect(p + ".in_proj", out);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].collect(p + ".block" + std::to_string(i), out);
        final_ln.collect(p + ".final_ln", out);
    }
};

// ---------------------------------------------------------------------------
// tabular: MLP with two hidden layers
// ---------------------------------------------------------------------------

struct TabularEncoder {
    Linear l1, l2, l3;
    size_t features = 0;

    TabularEncoder() = default;
    TabularEncoder(size_t features_, size_t hidden, size_t out, Rng& rng)
        : l1(features_, hidden, rng), l2(hidden, hidden, rng), l3(hidden, out, rng),
          features(features_) {}

    RealTensor forward(const RealTensor& x) const {
        require(x.rank() == 2 && x.shape()[1] == features, ErrorCode::shape,
                "tabular encoder built for " + std::to_string(features) + " features, got " +
                    shape_str(x.shape()));
        return l3.forward(relu(l2.forward(relu(l1.forward(x)))));
    }

    void collect(const std::string& p, ParamList& out) {
        l1.collect(p + ".l1", out);
        l2.collect(p + ".l2", out);
        l3.collect(p + ".l3", out);
    }
};

// ---------------------------------------------------------------------------
// categorical: embedding lookup
// ---------------------------------------------------------------------------

struct CategoricalEncoder {
    Embedding emb;
    size_t classes = 0;

    CategoricalEncoder() = default;
    CategoricalEncoder(size_t classes_, size_t dim, Rng& rng)
        : emb(classes_, dim, rng), classes(classes_) {}

    RealTensor forward(const std::vector<int>& ids) const { return emb.forward(ids); }

    void collect(const std::string& p, ParamList& out) { emb.collect(p + ".emb", out); }
};

// ---------------------------------------------------------------------------
// spatial images: U-Net backbone, four pooling and four upsampling stages,
// skip connections, 64-channel full-resolution latent map
// ---------------------------------------------------------------------------

struct UnetEncoder {
    Conv e1, e2, e3, e4, bottleneck, d4, d3, d2, d1;
    size_t in_channels = 0;
    static constexpr size_t out_channels = 64;

    UnetEncoder() = default;
    UnetEncoder(size_t cin, Rng& rng)
        : e1(cin, 8, 3, 1, 1, rng),
          e2(8, 16, 3, 1, 1, rng),
          e3(16, 32, 3, 1, 1, rng),
          e4(32, 64, 3, 1, 1, rng),
          bottleneck(64, 64, 3, 1, 1, rng),
          d4(128, 32, 3, 1, 1, rng),
          d3(64, 16, 3, 1, 1, rng),
          d2(32, 16, 3, 1, 1, rng),
          d1(24, 64, 3, 1, 1, rng),
          in_channels(cin) {}

    RealTensor forward(const RealTensor& x) const {
        require(x.rank() == 4 && x.shape()[1] == in_channels, ErrorCode::shape,
                "unet encoder expects [N x " + std::to_string(in_channels) + " x H x W], got " +
                    shape_str(x.shape()));
        size_t H = x.shape()[2], W = x.shape()[3];
        require(H % 16 == 0 && W % 16 == 0 && H >= 16 && W >= 16, ErrorCode::shape,
                "unet encoder needs spatial extents divisible by 16, got " + shape_str(x.shape()));
        auto s1 = relu(e1.forward(x));
        auto s2 = relu(e2.forward(maxpool2(s1)));
        auto s3 = relu(e3.forward(maxpool2(s2)));
        auto s4 = relu(e4.forward(maxpool2(s3)));
        auto bn = relu(bottleneck.forward(maxpool2(s4)));
        auto u4 = relu(d4.forward(concat<real>({upsample2(bn), s4}, 1)));
        auto u3 = relu(d3.forward(concat<real>({upsample2(u4), s3}, 1)));
        auto u2 = relu(d2.forward(concat<real>({upsample2(u3), s2}, 1)));
        return relu(d1.forward(concat<real>({upsample2(u2), s1}, 1)));
    }

    void collect(const std::string& p, ParamList& out) {
        e1.collect(p + ".e1", out);
        e2.collect(p + ".e2", out);
        e3.collect(p + ".e3", out);
        e4.collect(p + ".e4", out);
        bottleneck.collect(p + ".bottleneck", out);
        d4.collect(p + ".d4", out);
        d3.collect(p + ".d3", out);
        d2.collect(p + ".d2", out);
        d1.collect(p + ".d1", out);
    }
};

// ---------------------------------------------------------------------------
// spatial images to vectors: conv blocks with global average pooling
// ---------------------------------------------------------------------------

struct CnnEncoder {
    Conv c1, c2, c3, c4;
    size_t in_channels = 0, out_dim = 0;

    CnnEncoder() = default;
    CnnEncoder(size_t cin, size_t out, Rng& rng)
        : c1(cin, 16, 3, 1, 1, rng),
          c2(16, 32, 3, 1, 1, rng),
          c3(32, 64, 3, 1, 1, rng),
          c4(64, out, 3, 1, 1, rng),
          in_channels(cin),
          out_dim(out) {}

    RealTensor forward(const RealTensor& x) const {
        require(x.rank() == 4 && x.shape()[1] == in_channels, ErrorCode::shape,
                "cnn encoder expects [N x " + std::to_string(in_channels) + " x H x W], got " +
                    shape_str(x.shape()));
        size_t H = x.shape()[2], W = x.shape()[3];
        require(H >= 16 && W >= 16 && H % 16 == 0 && W % 16 == 0, ErrorCode::shape,
                "cnn encoder needs spatial extents >= 16 and divisible by 16, got " +
                    shape_str(x.shape()));
        auto h = maxpool2(relu(c1.forward(x)));
        h = maxpool2(relu(c2.forward(h)));
        h = maxpool2(relu(c3.forward(h)));
        h = maxpool2(relu(c4.forward(h)));
        return global_avg_pool(h);
    }

    void collect(const std::string& p, ParamList& out) {
        c1.collect(p + ".c1", out);
        c2.collect(p + ".c2", out);
        c3.collect(p + ".c3", out);
        c4.collect(p + ".c4", out);
    }
};

// ---------------------------------------------------------------------------
// small multichannel patches: flatten, then three linear layers with ReLU and
// dropout between them
// ---------------------------------------------------------------------------

struct FlatImageEncoder {
    Linear l1, l2, l3;
    size_t in_elems = 0;
    double drop_p = 0.3;

    FlatImageEncoder() = default;
    FlatImageEncoder(size_t in_elems_, size_t out, double drop, Rng& rng)
        : l1(in_elems_, 512, rng), l2(512, 512, rng), l3(512, out, rng), in_elems(in_elems_),
          drop_p(drop) {}

    // x arrives flattened [N x (C*H*W)].
    RealTensor forward(const RealTensor& x, bool training, Rng& drop_rng) const {
        require(x.rank() == 2 && x.shape()[1] == in_elems, ErrorCode::shape,
                "flat image encoder built for " + std::to_string(in_elems) +
                    " inputs, got " + shape_str(x.shape()));
        auto h = dropout(relu(l1.forward(x)), drop_p, training, drop_rng);
        h = dropout(relu(l2.forward(h)), drop_p, training, drop_rng);
        return l3.forward(h);
    }

    void collect(const std::string& p, ParamList& out) {
        l1.collect(p + ".l1", out);
        l2.collect(p + ".l2", out);
        l3.collect(p + ".l3", out);
    }
};

} // namespace mtx

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mtx/layers.hpp"

namespace mtx {

// Vector latents fuse by concatenation along the feature axis.
inline RealTensor fuse_vectors(const std::vector<RealTensor>& parts) {
    require(!parts.empty(), ErrorCode::shape, "vector fusion needs at least one latent");
    for (const auto& p : parts)
        require(p.rank() == 2, ErrorCode::shape, "vector fusion expects [N x D] latents");
    if (parts.size() == 1) return parts[0];
    return concat<real>(parts, 1);
}

// Spatial fusion: map latents keep their grid, vector latents are broadcast
// to every cell, and the channel concatenation is mixed by two 1x1 convs.
struct SpatialFusion {
    Conv mix1, mix2;
    size_t total_channels = 0;
    static constexpr size_t out_channels = 64;

    SpatialFusion() = default;
    SpatialFusion(size_t total, Rng& rng)
        : mix1(total, out_channels, 1, 1, 0, rng),
          mix2(out_channels, out_channels, 1, 1, 0, rng),
          total_channels(total) {}

    RealTensor forward(const std::vector<RealTensor>& maps,
                       const std::vector<RealTensor>& vectors) const {
        require(!maps.empty(), ErrorCode::shape, "spatial fusion needs at least one map latent");
        size_t H = maps[0].shape()[2], W = maps[0].shape()[3];
        std::vector<RealTensor> parts;
        size_t channels = 0;
        for (const auto& m : maps) {
            require(m.rank() == 4 && m.shape()[2] == H && m.shape()[3] == W, ErrorCode::shape,
                    "map latents must share one grid");
            parts.push_back(m);
            channels += m.shape()[1];
        }
        for (const auto& v : vectors) {
            parts.push_back(broadcast_to_map(v, H, W));
            channels += v.shape()[1];
        }
        require(channels == total_channels, ErrorCode::shape,
                "spatial fusion built for " + std::to_string(total_channels) +
                    " channels, got " + std::to_string(channels));
        auto cat = parts.size() == 1 ? parts[0] : concat<real>(parts, 1);
        return relu(mix2.forward(relu(mix1.forward(cat))));
    }

    void collect(const std::string& p, ParamList& out) {
        mix1.collect(p + ".mix1", out);
        mix2.collect(p + ".mix2", out);
    }
};

} // namespace mtx

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "mtx/tensor.hpp"

namespace mtx {

// Adam with bias correction. Slot buffers are keyed by tensor node identity,
// created lazily on the first step that sees a parameter.
template <typename T>
struct AdamState {
    struct Slot {
        std::vector<T> m, v;
    };
    std::unordered_map<const TensorNode<T>*, Slot> slots;
    int64_t step_count = 0;
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// One update over all parameters from their accumulated grads; grads are
// cleared afterwards so the next accumulation starts fresh.
template <typename T>
void optimizer_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr = T(1e-3)) {
    require(lr > T(0), ErrorCode::config, "optimizer_step: lr must be positive");
    state.step_count += 1;
    double b1 = double(state.beta1), b2 = double(state.beta2);
    double bc1 = 1.0 - std::pow(b1, double(state.step_count));
    double bc2 = 1.0 - std::pow(b2, double(state.step_count));
    for (auto& p : params) {
        require(p.requires_grad(), ErrorCode::train,
                "optimizer_step: parameter does not track gradients");
        auto* node = p.node();
        auto& slot = state.slots[node];
        if (slot.m.empty()) {
            slot.m.assign(p.numel(), T(0));
            slot.v.assign(p.numel(), T(0));
        }
        const auto& g = p.grad();
        auto& w = p.data();
        for (size_t i = 0; i < w.size(); ++i) {
            double gi = double(g[i]);
            double m = b1 * double(slot.m[i]) + (1.0 - b1) * gi;
            double v = b2 * double(slot.v[i]) + (1.0 - b2) * gi * gi;
            slot.m[i] = T(m);
            slot.v[i] = T(v);
            double mhat = m / bc1;
            double vhat = v / bc2;
            w[i] = T(double(w[i]) - double(lr) * mhat / (std::sqrt(vhat) + double(state.eps)));
        }
        p.zero_grad();
    }
}

} // namespace mtx
